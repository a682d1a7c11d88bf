use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

const KEYWORDS: &[&str] = &[
    "def", "for", "in", "if", "elif", "else", "return", "and", "or", "not", "is", "True", "False", "None",
];

/// Parses a whole program. The first function is the entry point.
pub fn parse(src: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, at: 0 };
    let mut functions: Vec<FunctionDef> = Vec::new();
    let mut names = BTreeSet::new();
    loop {
        p.skip_separators();
        if p.peek() == &Tok::Eof {
            break;
        }
        let f = p.funcdef()?;
        if !names.insert(f.name.clone()) {
            return Err(SyntaxError::new(f.pos, format!("function {} is defined twice", f.name)));
        }
        functions.push(f);
    }
    if functions.is_empty() {
        return Err(SyntaxError::new(p.pos(), "expected at least one function definition"));
    }
    Ok(Program { functions })
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.tokens[(self.at + k).min(self.tokens.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, wanted: &str) -> SyntaxError {
        let found = match self.peek() {
            Tok::Ident(w) => format!("{w:?}"),
            Tok::Int(i) => i.to_string(),
            Tok::Float(x) => x.to_string(),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Op(o) => format!("{o:?}"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        };
        SyntaxError::new(self.pos(), format!("expected {wanted}, found {found}"))
    }

    fn expect_op(&mut self, op: &str) -> Result<(), SyntaxError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("{op:?}")))
        }
    }

    fn name(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek(), Tok::Newline) || self.is_op(";") {
            self.bump();
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek(), Tok::Newline) {
            self.bump();
        }
    }

    fn funcdef(&mut self) -> Result<FunctionDef, SyntaxError> {
        let pos = self.pos();
        if !self.eat_kw("def") {
            return Err(self.unexpected("\"def\""));
        }
        let name = self.name()?;
        self.expect_op("(")?;
        let mut params = Vec::new();
        if !self.is_op(")") {
            loop {
                let p = self.name()?;
                if params.contains(&p) {
                    return Err(SyntaxError::new(self.pos(), format!("duplicate parameter {p}")));
                }
                params.push(p);
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        self.expect_op(")")?;
        let body = self.block()?;
        Ok(FunctionDef { name, params, body, pos })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.skip_newlines();
        self.expect_op("{")?;
        let mut body = Vec::new();
        loop {
            self.skip_separators();
            if self.eat_op("}") {
                return Ok(body);
            }
            body.push(self.statement()?);
            if !(matches!(self.peek(), Tok::Newline) || self.is_op(";") || self.is_op("}")) {
                return Err(self.unexpected("end of statement"));
            }
        }
    }

    fn statement(&mut self) -> Result<Stmt, SyntaxError> {
        let pos = self.pos();
        let kind = if self.eat_kw("for") {
            let target = self.name()?;
            if !self.eat_kw("in") {
                return Err(self.unexpected("\"in\""));
            }
            let iter = self.expr()?;
            StmtKind::For { target, iter, body: self.block()? }
        } else if self.eat_kw("if") {
            let cond = self.expr()?;
            let then = self.block()?;
            let mut elifs = Vec::new();
            let mut orelse = None;
            loop {
                let save = self.at;
                self.skip_newlines();
                if self.eat_kw("elif") {
                    let c = self.expr()?;
                    elifs.push((c, self.block()?));
                } else if self.eat_kw("else") {
                    orelse = Some(self.block()?);
                    break;
                } else {
                    self.at = save;
                    break;
                }
            }
            StmtKind::If { cond, then, elifs, orelse }
        } else if self.eat_kw("return") {
            if matches!(self.peek(), Tok::Newline) || self.is_op(";") || self.is_op("}") {
                StmtKind::Return(None)
            } else {
                StmtKind::Return(Some(self.expr_list()?))
            }
        } else if self.is_kw("emit") && matches!(self.peek_at(1), Tok::Op("(")) {
            self.bump();
            self.bump();
            let value = self.expr()?;
            self.expect_op(")")?;
            StmtKind::Emit(value)
        } else if self.is_kw("def") {
            return Err(SyntaxError::new(pos, "nested function definitions are not supported"));
        } else {
            let lhs = self.expr_list()?;
            if self.eat_op("=") {
                let targets = assign_targets(&lhs)?;
                StmtKind::Assign { targets, value: self.expr_list()? }
            } else if let Some(op) = self.aug_op() {
                let ExprKind::Name(n) = &lhs.kind else {
                    return Err(SyntaxError::new(lhs.pos, "augmented assignment needs a plain name"));
                };
                let rhs = self.expr()?;
                let value = Expr::new(ExprKind::Binary(op, Box::new(lhs.clone()), Box::new(rhs)), lhs.pos);
                StmtKind::Assign { targets: vec![n.clone()], value }
            } else {
                StmtKind::Expr(lhs)
            }
        };
        Ok(Stmt { kind, pos })
    }

    fn aug_op(&mut self) -> Option<BinOp> {
        let op = match self.peek() {
            Tok::Op("+=") => BinOp::Add,
            Tok::Op("-=") => BinOp::Sub,
            Tok::Op("*=") => BinOp::Mul,
            Tok::Op("/=") => BinOp::Div,
            _ => return None,
        };
        self.bump();
        Some(op)
    }

    /// `a` or the unparenthesized tuple `a, b, c`.
    fn expr_list(&mut self) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        let first = self.expr()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_expr_end() {
                break;
            }
            items.push(self.expr()?);
        }
        Ok(Expr::new(ExprKind::Tuple(items), pos))
    }

    fn at_expr_end(&self) -> bool {
        matches!(self.peek(), Tok::Newline | Tok::Eof)
            || self.is_op(";")
            || self.is_op("}")
            || self.is_op(")")
            || self.is_op("=")
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while self.is_kw("or") {
            let pos = self.pos();
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::new(ExprKind::Or(Box::new(lhs), Box::new(rhs)), pos);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.not_expr()?;
        while self.is_kw("and") {
            let pos = self.pos();
            self.bump();
            let rhs = self.not_expr()?;
            lhs = Expr::new(ExprKind::And(Box::new(lhs), Box::new(rhs)), pos);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.is_kw("not") {
            let pos = self.pos();
            self.bump();
            let inner = self.not_expr()?;
            return Ok(Expr::new(ExprKind::Not(Box::new(inner)), pos));
        }
        self.comparison()
    }

    fn cmp_op(&mut self) -> Option<CmpOp> {
        let op = match self.peek() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::Ge,
            Tok::Ident(w) if w == "is" => {
                self.bump();
                return Some(if self.eat_kw("not") { CmpOp::IsNot } else { CmpOp::Is });
            }
            _ => return None,
        };
        self.bump();
        Some(op)
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.arith()?;
        let pos = self.pos();
        let Some(op) = self.cmp_op() else {
            return Ok(lhs);
        };
        let rhs = self.arith()?;
        let chained = self.pos();
        if self.cmp_op().is_some() {
            return Err(SyntaxError::new(chained, "comparison chains are not supported"));
        }
        Ok(Expr::new(ExprKind::Compare(op, Box::new(lhs), Box::new(rhs)), pos))
    }

    fn arith(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                Tok::Op("//") => BinOp::FloorDiv,
                Tok::Op("%") => BinOp::Mod,
                _ => return Ok(lhs),
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.is_op("-") {
            let pos = self.pos();
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::new(ExprKind::Neg(Box::new(inner)), pos));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.postfix()?;
        if self.is_op("**") {
            let pos = self.pos();
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::new(ExprKind::Binary(BinOp::Pow, Box::new(base), Box::new(exp)), pos));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.atom()?;
        loop {
            let pos = self.pos();
            if self.eat_op(".") {
                let field = self.name()?;
                e = Expr::new(ExprKind::Attribute(Box::new(e), field), pos);
            } else if self.eat_op("[") {
                let index = self.expr()?;
                if self.is_op(":") {
                    return Err(SyntaxError::new(self.pos(), "slices are not supported"));
                }
                self.expect_op("]")?;
                e = Expr::new(ExprKind::Subscript(Box::new(e), Box::new(index)), pos);
            } else if self.is_op("(") {
                let ExprKind::Name(callee) = &e.kind else {
                    return Err(SyntaxError::new(pos, "only named functions can be called"));
                };
                let callee = callee.clone();
                self.bump();
                let mut args = Vec::new();
                if !self.is_op(")") {
                    loop {
                        args.push(self.expr()?);
                        if !self.eat_op(",") || self.is_op(")") {
                            break;
                        }
                    }
                }
                self.expect_op(")")?;
                e = Expr::new(ExprKind::Call(callee, args), e.pos);
            } else {
                return Ok(e);
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                ExprKind::Int(i)
            }
            Tok::Float(x) => {
                self.bump();
                ExprKind::Float(x)
            }
            Tok::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            Tok::Ident(w) if w == "True" || w == "False" => {
                self.bump();
                ExprKind::Bool(w == "True")
            }
            Tok::Ident(w) if w == "None" => {
                self.bump();
                ExprKind::None
            }
            Tok::Ident(_) => ExprKind::Name(self.name()?),
            Tok::Op("(") => {
                self.bump();
                if self.eat_op(")") {
                    return Ok(Expr::new(ExprKind::Tuple(Vec::new()), pos));
                }
                let first = self.expr()?;
                if self.eat_op(")") {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.is_op(")") {
                        break;
                    }
                    items.push(self.expr()?);
                }
                self.expect_op(")")?;
                ExprKind::Tuple(items)
            }
            _ => return Err(self.unexpected("an expression")),
        };
        Ok(Expr::new(kind, pos))
    }
}

fn assign_targets(lhs: &Expr) -> Result<Vec<String>, SyntaxError> {
    match &lhs.kind {
        ExprKind::Name(n) => Ok(vec![n.clone()]),
        ExprKind::Tuple(items) if items.len() >= 2 => items
            .iter()
            .map(|e| match &e.kind {
                ExprKind::Name(n) => Ok(n.clone()),
                _ => Err(SyntaxError::new(e.pos, "tuple targets must be plain names")),
            })
            .collect(),
        _ => Err(SyntaxError::new(lhs.pos, "invalid assignment target")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAX_PT: &str = "def max_pt(event) {
    maximum = 0.0
    for muon in event.muons {
        if muon.pt > maximum {
            maximum = muon.pt
        }
    }
    emit(maximum)
}";

    fn body(src: &str) -> Vec<Stmt> {
        parse(src).unwrap().functions.remove(0).body
    }

    fn count_stmts(b: &[Stmt]) -> usize {
        b.iter()
            .map(|s| {
                1 + match &s.kind {
                    StmtKind::For { body, .. } => count_stmts(body),
                    StmtKind::If { then, elifs, orelse, .. } => {
                        count_stmts(then)
                            + elifs.iter().map(|(_, b)| count_stmts(b)).sum::<usize>()
                            + orelse.as_ref().map_or(0, |b| count_stmts(b))
                    }
                    _ => 0,
                }
            })
            .sum()
    }

    #[test]
    fn max_pt_has_five_statements() {
        let b = body(MAX_PT);
        assert_eq!(count_stmts(&b), 5);
        assert!(matches!(b[2].kind, StmtKind::Emit(_)));
    }

    #[test]
    fn missing_expression_is_reported_with_position() {
        let err = parse("def f(e) {\n  x = \n}").unwrap_err();
        assert_eq!(err.pos, Pos::new(2, 7));
    }

    #[test]
    fn tuple_targets() {
        let b = body("def f(e) { m1, m2 = pair }");
        let StmtKind::Assign { targets, .. } = &b[0].kind else { panic!() };
        assert_eq!(targets, &["m1", "m2"]);
        let b = body("def f(e) { (a, b) = (1, 2) }");
        assert!(matches!(&b[0].kind, StmtKind::Assign { targets, .. } if targets.len() == 2));
    }

    #[test]
    fn precedence() {
        let b = body("def f(e) { x = -2 ** 2 + 3 * 4 }");
        let StmtKind::Assign { value, .. } = &b[0].kind else { panic!() };
        let ExprKind::Binary(BinOp::Add, lhs, _) = &value.kind else { panic!("{value:?}") };
        assert!(matches!(&lhs.kind, ExprKind::Neg(inner) if matches!(inner.kind, ExprKind::Binary(BinOp::Pow, ..))));
    }

    #[test]
    fn rejected_forms() {
        assert!(parse("def f(e) { x = a < b < c }").is_err());
        assert!(parse("def f(e) { x = y[1:2] }").is_err());
        assert!(parse("x = 1").is_err());
        assert!(parse("def f(e) {} def f(e) {}").is_err());
        assert!(parse("def f(e) { a.b(1) }").is_err());
        assert!(parse("def f(e) { f(x) = 1 }").is_err());
    }

    #[test]
    fn if_elif_else_across_lines() {
        let b = body("def f(e) {\n if a { x = 1 }\n elif b { x = 2 }\n else { x = 3 }\n emit(x)\n}");
        assert_eq!(b.len(), 2);
        let StmtKind::If { elifs, orelse, .. } = &b[0].kind else { panic!() };
        assert_eq!(elifs.len(), 1);
        assert!(orelse.is_some());
    }

    #[test]
    fn augmented_assignment_desugars() {
        assert_eq!(
            {
                let mut p = parse("def f(e) { s += 1 }").unwrap();
                p.clear_positions();
                p
            },
            {
                let mut p = parse("def f(e) { s = s + 1 }").unwrap();
                p.clear_positions();
                p
            }
        );
    }
}
