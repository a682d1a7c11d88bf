use crate::exec::Scalar;
use crate::query::BinOp;

use super::plan::*;

fn for_each_stmt(plan: &mut Plan, f: &mut dyn FnMut(&mut PStmt)) {
    plan.body.iter_mut().for_each(&mut *f);
    plan.functions.iter_mut().flat_map(|g| g.body.iter_mut()).for_each(f);
}

/// Replaces reads of element 0 of any offset column by the literal 0: every
/// valid offset column starts at zero.
pub fn eliminate_zero_lookups(plan: &mut Plan) {
    let offsets: Vec<bool> = plan.columns.iter().map(|c| c.ends_with("-Lo")).collect();
    let mut rewrite = |e: PExpr| match e {
        PExpr::Read { col, index } if offsets[col] && *index == PExpr::int(0) => PExpr::int(0),
        PExpr::Binary(BinOp::Add, a, b) => match (*a, *b) {
            (PExpr::Const(Scalar::Int(x)), PExpr::Const(Scalar::Int(y))) if x.checked_add(y).is_some() => {
                PExpr::int(x + y)
            }
            (a, b) => PExpr::Binary(BinOp::Add, a.boxed(), b.boxed()),
        },
        e => e,
    };
    for_each_stmt(plan, &mut |s| s.map_exprs(&mut rewrite));
}

fn slot_reads(plan: &Plan) -> Vec<usize> {
    let mut counts = vec![0; plan.slots];
    for s in plan.all_statements() {
        s.walk_exprs(&mut |e| {
            e.walk(&mut |e| {
                if let PExpr::Slot(s) = e {
                    counts[*s] += 1;
                }
            })
        });
        dispatch_reads(s, &mut counts);
    }
    counts
}

fn dispatch_reads(s: &PStmt, counts: &mut [usize]) {
    match s {
        PStmt::Dispatch { arms } => {
            for (assumptions, body) in arms {
                assumptions.iter().for_each(|(slot, _)| counts[*slot] += 1);
                body.iter().for_each(|s| dispatch_reads(s, counts));
            }
        }
        PStmt::If { then, orelse, .. } => then.iter().chain(orelse).for_each(|s| dispatch_reads(s, counts)),
        PStmt::Loop { body, .. } => body.iter().for_each(|s| dispatch_reads(s, counts)),
        _ => {}
    }
}

/// Peels a chain of reads `c1[c2[...[base]]]`.
fn read_chain(e: &PExpr) -> (Vec<ColRef>, &PExpr) {
    let mut cols = Vec::new();
    let mut e = e;
    while let PExpr::Read { col, index } = e {
        cols.push(*col);
        e = index;
    }
    (cols, e)
}

fn rebuild(cols: &[ColRef], base: PExpr) -> PExpr {
    cols.iter().rev().fold(base, |index, &col| PExpr::Read { col, index: index.boxed() })
}

/// If `outer` just walks every item of its range through an inner loop
/// that only uses the innermost items, returns the single loop over the
/// innermost range.
fn flatten_pair(outer: &PStmt, reads: &[usize]) -> Option<PStmt> {
    let PStmt::Loop { var: v1, lo: l1, hi: h1, kind, body, .. } = outer else { return None };
    if *kind == LoopKind::Range {
        return None;
    }
    let [inner @ PStmt::Loop { var, lo, hi, kind, extent, body }] = body.as_slice() else { return None };
    if *kind == LoopKind::Range || reads[*v1] != 2 || inner.contains_return() {
        return None;
    }
    let (lo_cols, lo_base) = read_chain(lo);
    let (hi_cols, hi_base) = read_chain(hi);
    let next = PExpr::Binary(BinOp::Add, PExpr::Slot(*v1).boxed(), PExpr::int(1).boxed());
    if lo_cols.is_empty() || lo_cols != hi_cols || *lo_base != PExpr::Slot(*v1) || *hi_base != next {
        return None;
    }
    Some(PStmt::Loop {
        var: *var,
        lo: rebuild(&lo_cols, l1.clone()),
        hi: rebuild(&lo_cols, h1.clone()),
        kind: *kind,
        extent: extent.clone(),
        body: body.clone(),
    })
}

fn flatten_block(stmts: &mut [PStmt], reads: &[usize]) -> bool {
    let mut changed = false;
    for s in stmts.iter_mut() {
        changed |= match s {
            PStmt::Loop { body, .. } => flatten_block(body, reads),
            PStmt::If { then, orelse, .. } => flatten_block(then, reads) | flatten_block(orelse, reads),
            PStmt::Dispatch { arms } => arms.iter_mut().fold(false, |c, (_, b)| c | flatten_block(b, reads)),
            _ => false,
        };
        if let Some(flat) = flatten_pair(s, reads) {
            *s = flat;
            changed = true;
        }
    }
    changed
}

/// Collapses nested loops that exhaustively cover contiguous offsets into
/// one loop over the innermost contents.
pub fn flatten_loops(plan: &mut Plan) {
    loop {
        let reads = slot_reads(plan);
        let mut changed = flatten_block(&mut plan.body, &reads);
        for f in &mut plan.functions {
            changed |= flatten_block(&mut f.body, &reads);
        }
        if !changed {
            return;
        }
    }
}
