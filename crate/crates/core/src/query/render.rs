use std::fmt::Write;

use super::ast::*;

/// Pretty-prints a program in a form that parses back to the same tree.
pub fn render(program: &Program) -> String {
    let mut out = String::new();
    for (i, f) in program.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "def {}({}) {{", f.name, f.params.join(", "));
        block(&mut out, &f.body, 1);
        out.push_str("}\n");
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    out.extend(std::iter::repeat_n("    ", depth));
}

fn block(out: &mut String, body: &[Stmt], depth: usize) {
    for s in body {
        stmt(out, s, depth);
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::Assign { targets, value } => {
            let _ = writeln!(out, "{} = {}", targets.join(", "), render_expr(value));
        }
        StmtKind::For { target, iter, body } => {
            let _ = writeln!(out, "for {target} in {} {{", render_expr(iter));
            block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
        StmtKind::If { cond, then, elifs, orelse } => {
            let _ = writeln!(out, "if {} {{", render_expr(cond));
            block(out, then, depth + 1);
            for (c, b) in elifs {
                indent(out, depth);
                let _ = writeln!(out, "}} elif {} {{", render_expr(c));
                block(out, b, depth + 1);
            }
            if let Some(b) = orelse {
                indent(out, depth);
                out.push_str("} else {\n");
                block(out, b, depth + 1);
            }
            indent(out, depth);
            out.push_str("}\n");
        }
        StmtKind::Return(None) => out.push_str("return\n"),
        StmtKind::Return(Some(e)) => {
            let _ = writeln!(out, "return {}", render_expr(e));
        }
        StmtKind::Emit(e) => {
            let _ = writeln!(out, "emit({})", render_expr(e));
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{}", render_expr(e));
        }
    }
}

pub fn render_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr(&mut out, e, 0);
    out
}

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Or(..) => 1,
        ExprKind::And(..) => 2,
        ExprKind::Not(_) => 3,
        ExprKind::Compare(..) => 4,
        ExprKind::Binary(BinOp::Add | BinOp::Sub, ..) => 5,
        ExprKind::Binary(BinOp::Pow, ..) => 8,
        ExprKind::Binary(..) => 6,
        ExprKind::Neg(_) => 7,
        _ => 9,
    }
}

fn expr(out: &mut String, e: &Expr, min: u8) {
    let paren = precedence(e) < min;
    if paren {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::Int(i) => {
            let _ = write!(out, "{i}");
        }
        ExprKind::Float(x) => {
            let _ = write!(out, "{x:?}");
        }
        ExprKind::Bool(b) => out.push_str(if *b { "True" } else { "False" }),
        ExprKind::None => out.push_str("None"),
        ExprKind::Str(s) => {
            let q = if s.contains('"') { '\'' } else { '"' };
            let _ = write!(out, "{q}{s}{q}");
        }
        ExprKind::Attribute(base, field) => {
            expr(out, base, 9);
            let _ = write!(out, ".{field}");
        }
        ExprKind::Subscript(base, index) => {
            expr(out, base, 9);
            out.push('[');
            expr(out, index, 0);
            out.push(']');
        }
        ExprKind::Call(name, args) => {
            let _ = write!(out, "{name}(");
            list(out, args);
            out.push(')');
        }
        ExprKind::Binary(op, a, b) => {
            let p = precedence(e);
            let (l, r) = if *op == BinOp::Pow { (9, 7) } else { (p, p + 1) };
            expr(out, a, l);
            let _ = write!(out, " {} ", op.symbol());
            expr(out, b, r);
        }
        ExprKind::Compare(op, a, b) => {
            expr(out, a, 5);
            let _ = write!(out, " {} ", op.symbol());
            expr(out, b, 5);
        }
        ExprKind::And(a, b) => {
            expr(out, a, 2);
            out.push_str(" and ");
            expr(out, b, 3);
        }
        ExprKind::Or(a, b) => {
            expr(out, a, 1);
            out.push_str(" or ");
            expr(out, b, 2);
        }
        ExprKind::Not(x) => {
            out.push_str("not ");
            expr(out, x, 3);
        }
        ExprKind::Neg(x) => {
            out.push('-');
            expr(out, x, 7);
        }
        ExprKind::Tuple(items) => {
            out.push('(');
            list(out, items);
            if items.len() == 1 {
                out.push(',');
            }
            out.push(')');
        }
    }
    if paren {
        out.push(')');
    }
}

fn list(out: &mut String, items: &[Expr]) {
    for (i, a) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        expr(out, a, 0);
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn round_trip(src: &str) {
        let mut a = parse(src).unwrap();
        let text = render(&a);
        let mut b = parse(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        a.clear_positions();
        b.clear_positions();
        assert_eq!(a, b, "{text}");
    }

    #[test]
    fn parenthesization_survives() {
        round_trip("def f(e) { x = (a - b) - (c - d) * -(2 ** -1) ** 2 }");
        round_trip("def f(e) { x = not (a or b) and c is not None }");
        round_trip("def f(e) { x = (1,); y = (a + b).pt[0] }");
    }

    #[test]
    fn control_flow() {
        round_trip(
            "def f(e) { for m in e.muons { if m.pt > 1 { emit(m.pt) } elif m.pt < 0 { return } else { g(m) } } }
             def g(m) { return m.eta, m.phi }",
        );
    }
}
