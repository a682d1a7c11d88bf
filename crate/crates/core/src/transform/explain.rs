use std::fmt::Write;

use crate::exec::{kind, Scalar};

use super::plan::*;

fn constant(s: &Scalar) -> String {
    match s {
        Scalar::Int(i) => i.to_string(),
        Scalar::Float(x) => format!("{x:?}"),
        Scalar::Bool(true) => "True".into(),
        Scalar::Bool(false) => "False".into(),
        Scalar::None => "None".into(),
    }
}

fn mask_names(mask: u8) -> String {
    let names: Vec<&str> = [(kind::INT, "int"), (kind::FLOAT, "float"), (kind::BOOL, "bool"), (kind::NONE, "NoneType")]
        .iter()
        .filter(|(bit, _)| mask & bit != 0)
        .map(|(_, n)| *n)
        .collect();
    if names.is_empty() {
        "nothing".into()
    } else {
        names.join("|")
    }
}

pub(crate) fn expr(plan: &Plan, e: &PExpr) -> String {
    let x = |e: &PExpr| expr(plan, e);
    match e {
        PExpr::Const(s) => constant(s),
        PExpr::Slot(s) => format!("s{s}"),
        PExpr::Read { col, index } => format!("{}[{}]", plan.columns[*col], x(index)),
        PExpr::Check { value, lo, hi, .. } => format!("check({} in [{}, {}))", x(value), x(lo), x(hi)),
        PExpr::Span { lo, hi, .. } => format!("span({}, {})", x(lo), x(hi)),
        PExpr::WrapNegative { index, len } => format!("wrap({}, {})", x(index), x(len)),
        PExpr::Binary(op, a, b) => format!("({} {} {})", x(a), op.symbol(), x(b)),
        PExpr::Compare(op, a, b) => format!("({} {} {})", x(a), op.symbol(), x(b)),
        PExpr::And(a, b) => format!("({} and {})", x(a), x(b)),
        PExpr::Or(a, b) => format!("({} or {})", x(a), x(b)),
        PExpr::Not(a) => format!("(not {})", x(a)),
        PExpr::Neg(a) => format!("(-{})", x(a)),
        PExpr::Math(f, a) => format!("{}({})", f.name(), x(a)),
        PExpr::TagIn { tag, tags } => {
            let tags: Vec<String> = tags.iter().map(u8::to_string).collect();
            format!("({} in {{{}}})", x(tag), tags.join(", "))
        }
        PExpr::KindIs { value, mask } => format!("kind({}) in {}", x(value), mask_names(*mask)),
        PExpr::Call { func, args } => {
            let args: Vec<String> = args.iter().map(x).collect();
            format!("{}#{}({})", plan.functions[*func].name, func, args.join(", "))
        }
        PExpr::Let { slot, value, body } => format!("(let s{slot} = {} in {})", x(value), x(body)),
        PExpr::Switch { tag, slot, offset, arms } => {
            let arms: Vec<String> = arms
                .iter()
                .enumerate()
                .map(|(t, a)| format!("{t}: {}", a.as_ref().map_or_else(|| "excluded".to_string(), x)))
                .collect();
            format!("switch {} with s{slot} = {} {{ {} }}", x(tag), x(offset), arms.join("; "))
        }
    }
}

fn block(plan: &Plan, stmts: &[PStmt], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for s in stmts {
        match s {
            PStmt::Assign(slot, e) => {
                let _ = writeln!(out, "{pad}s{slot} = {}", expr(plan, e));
            }
            PStmt::Emit(e) => {
                let _ = writeln!(out, "{pad}emit {}", expr(plan, e));
            }
            PStmt::Eval(e) => {
                let _ = writeln!(out, "{pad}eval {}", expr(plan, e));
            }
            PStmt::Return(None) => {
                let _ = writeln!(out, "{pad}return");
            }
            PStmt::Return(Some(e)) => {
                let _ = writeln!(out, "{pad}return {}", expr(plan, e));
            }
            PStmt::If { cond, then, orelse } => {
                let _ = writeln!(out, "{pad}if {}:", expr(plan, cond));
                block(plan, then, depth + 1, out);
                if !orelse.is_empty() {
                    let _ = writeln!(out, "{pad}else:");
                    block(plan, orelse, depth + 1, out);
                }
            }
            PStmt::Loop { var, lo, hi, kind, extent, body } => {
                let kind = match kind {
                    LoopKind::Event => "events",
                    LoopKind::List => "list",
                    LoopKind::Range => "range",
                };
                let _ = write!(out, "{pad}loop {kind} s{var} in [{}, {})", expr(plan, lo), expr(plan, hi));
                if !extent.is_empty() {
                    let cols: Vec<String> = extent
                        .iter()
                        .map(|(c, sub)| if *sub == 0 { plan.columns[*c].clone() } else { format!("{}-{sub}", plan.columns[*c]) })
                        .collect();
                    let _ = write!(out, " within len({})", cols.join(", "));
                }
                let _ = writeln!(out, ":");
                block(plan, body, depth + 1, out);
            }
            PStmt::Dispatch { arms } => {
                let _ = writeln!(out, "{pad}dispatch:");
                for (assumptions, body) in arms {
                    let conds: Vec<String> = assumptions.iter().map(|(s, t)| format!("s{s} == {t}")).collect();
                    let _ = writeln!(out, "{pad}  when {}:", if conds.is_empty() { "always".into() } else { conds.join(" and ") });
                    block(plan, body, depth + 2, out);
                }
            }
        }
    }
}

/// Deterministic text rendering of a plan.
pub fn explain(plan: &Plan) -> String {
    let mut out = String::new();
    let on = |b: bool| if b { "on" } else { "off" };
    let _ = writeln!(out, "plan {} over {}", plan.entry, plan.prefix);
    let _ = writeln!(
        out,
        "range checks {}, negative indices {}, {} slots, events s{}..s{}",
        on(plan.range_checks),
        on(plan.negative_indices),
        plan.slots,
        plan.range_lo,
        plan.range_hi
    );
    let _ = writeln!(out, "reads:");
    for c in plan.referenced_columns() {
        let _ = writeln!(out, "  {c}");
    }
    block(plan, &plan.body, 0, &mut out);
    for (i, f) in plan.functions.iter().enumerate() {
        let params: Vec<String> = f.params.iter().map(|s| format!("s{s}")).collect();
        let _ = writeln!(out, "function {}#{i} {} params {}:", f.name, f.signature, params.join(", "));
        block(plan, &f.body, 1, &mut out);
    }
    for g in &plan.guards {
        let _ = writeln!(out, "guard at {}: {} -> {} branches", g.pos, g.before, g.after);
    }
    out
}
