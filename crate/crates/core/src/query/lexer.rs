use super::{Pos, SyntaxError};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Op(&'static str),
    Newline,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

// Longest first so that "//" wins over "/".
const OPERATORS: &[&str] = &[
    "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "+", "-", "*", "/", "%", "<", ">", "=",
    "(", ")", "[", "]", "{", "}", ",", ".", ";", ":",
];

/// Splits source text into tokens. Newlines inside parentheses or brackets
/// are dropped; newlines inside braces separate statements.
pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    let mut nesting: Vec<char> = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos::new(line, col);
        if c == '\n' {
            if !matches!(nesting.last(), Some('(') | Some('[')) {
                out.push(Token { tok: Tok::Newline, pos });
            }
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            number(&chars, &mut i, pos)?
        } else if c == '"' || c == '\'' {
            i += 1;
            while i < chars.len() && chars[i] != c && chars[i] != '\n' {
                i += 1;
            }
            if chars.get(i) != Some(&c) {
                return Err(SyntaxError::new(pos, "unterminated string"));
            }
            i += 1;
            Tok::Str(chars[start + 1..i - 1].iter().collect())
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let op = OPERATORS
                .iter()
                .find(|op| rest.starts_with(**op))
                .ok_or_else(|| SyntaxError::new(pos, format!("unexpected character {c:?}")))?;
            i += op.chars().count();
            match *op {
                "(" | "[" | "{" => nesting.push(op.chars().next().unwrap_or('(')),
                ")" | "]" | "}" => {
                    nesting.pop();
                }
                _ => {}
            }
            Tok::Op(op)
        };
        col += (i - start) as u32;
        out.push(Token { tok, pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos::new(line, col) });
    Ok(out)
}

fn number(chars: &[char], i: &mut usize, pos: Pos) -> Result<Tok, SyntaxError> {
    let start = *i;
    let mut float = false;
    while *i < chars.len() && chars[*i].is_ascii_digit() {
        *i += 1;
    }
    if chars.get(*i) == Some(&'.') {
        float = true;
        *i += 1;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
    }
    if matches!(chars.get(*i), Some('e') | Some('E')) {
        let mut j = *i + 1;
        if matches!(chars.get(j), Some('+') | Some('-')) {
            j += 1;
        }
        if chars.get(j).is_some_and(char::is_ascii_digit) {
            float = true;
            *i = j;
            while *i < chars.len() && chars[*i].is_ascii_digit() {
                *i += 1;
            }
        }
    }
    let text: String = chars[start..*i].iter().collect();
    if float {
        text.parse().map(Tok::Float).map_err(|_| SyntaxError::new(pos, format!("bad number {text}")))
    } else {
        text.parse()
            .map(Tok::Int)
            .map_err(|_| SyntaxError::new(pos, format!("integer literal {text} out of range")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_operators() {
        assert_eq!(
            toks("x//2 ** 1.5e3"),
            vec![
                Tok::Ident("x".into()),
                Tok::Op("//"),
                Tok::Int(2),
                Tok::Op("**"),
                Tok::Float(1500.0),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn newlines_inside_parens_are_ignored() {
        assert_eq!(toks("f(a,\n b)\n"), toks("f(a, b)\n"));
        assert!(toks("{\n}").contains(&Tok::Newline));
    }

    #[test]
    fn positions_are_one_based() {
        let t = tokenize("a\n  bb # note\n").unwrap();
        assert_eq!(t[0].pos, Pos::new(1, 1));
        assert_eq!(t[2].pos, Pos::new(2, 3));
    }

    #[test]
    fn bad_input() {
        assert!(tokenize("a $ b").is_err());
        assert!(tokenize("'open").is_err());
        assert!(tokenize("99999999999999999999").is_err());
    }
}
