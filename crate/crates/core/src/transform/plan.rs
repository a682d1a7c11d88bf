use crate::exec::{MathFn, Scalar};
use crate::query::{BinOp, CmpOp, Pos};

pub type Slot = usize;

/// Index into [`Plan::columns`].
pub type ColRef = usize;

/// Index into [`Plan::functions`].
pub type FnRef = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum PExpr {
    Const(Scalar),
    Slot(Slot),
    /// Element `index` of a column.
    Read { col: ColRef, index: Box<PExpr> },
    /// `value` itself if `lo <= value < hi` and the span `lo..hi` fits in
    /// `extent` (as for [`PStmt::Loop`]), otherwise a range error.
    Check { value: Box<PExpr>, lo: Box<PExpr>, hi: Box<PExpr>, extent: Vec<(ColRef, usize)> },
    /// `hi - lo` once the span `lo..hi` is known to fit in `extent`.
    Span { lo: Box<PExpr>, hi: Box<PExpr>, extent: Vec<(ColRef, usize)> },
    /// `index + len` when `index` is negative.
    WrapNegative { index: Box<PExpr>, len: Box<PExpr> },
    Binary(BinOp, Box<PExpr>, Box<PExpr>),
    /// Never `is`/`is not`; identity is lowered before it reaches the plan.
    Compare(CmpOp, Box<PExpr>, Box<PExpr>),
    And(Box<PExpr>, Box<PExpr>),
    Or(Box<PExpr>, Box<PExpr>),
    Not(Box<PExpr>),
    Neg(Box<PExpr>),
    Math(MathFn, Box<PExpr>),
    /// Union tag membership: true if `tag` is one of `tags`.
    TagIn { tag: Box<PExpr>, tags: Vec<u8> },
    /// Runtime kind test on a scalar against a mask of `exec::kind` bits.
    KindIs { value: Box<PExpr>, mask: u8 },
    Call { func: FnRef, args: Vec<PExpr> },
    /// Evaluates `value` into `slot`, then evaluates `body`.
    Let { slot: Slot, value: Box<PExpr>, body: Box<PExpr> },
    /// Reads a union tag, stores the matching alternative's position in
    /// `slot` and evaluates the arm for that tag. `None` arms are excluded by
    /// an enclosing guard.
    Switch { tag: Box<PExpr>, slot: Slot, offset: Box<PExpr>, arms: Vec<Option<PExpr>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopKind {
    /// The loop over events; a `return` moves on to the next event.
    Event,
    /// Over the contents of a stored list.
    List,
    /// Over `range(...)`.
    Range,
}

/// Slot/tag assumptions and the statements to run when they hold.
pub type DispatchArm = (Vec<(Slot, u8)>, Vec<PStmt>);

#[derive(Debug, Clone, PartialEq)]
pub enum PStmt {
    Assign(Slot, PExpr),
    Emit(PExpr),
    Eval(PExpr),
    If { cond: PExpr, then: Vec<PStmt>, orelse: Vec<PStmt> },
    Loop {
        var: Slot,
        lo: PExpr,
        hi: PExpr,
        kind: LoopKind,
        /// Columns whose physical length bounds `hi` (with the amount to
        /// subtract from each length); checked when range checks are on.
        extent: Vec<(ColRef, usize)>,
        body: Vec<PStmt>,
    },
    /// Runs the first arm whose slot/tag assumptions all hold.
    Dispatch { arms: Vec<DispatchArm> },
    Return(Option<PExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanFunction {
    pub name: String,
    /// Human-readable argument signature, e.g. `(Record@events-Ld-R_muons-Ld, scalar)`.
    pub signature: String,
    pub params: Vec<Slot>,
    pub body: Vec<PStmt>,
}

/// Live symbol-table branches before and after an isinstance guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuardStat {
    pub pos: Pos,
    pub before: usize,
    pub after: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub entry: String,
    pub prefix: String,
    pub columns: Vec<String>,
    pub functions: Vec<PlanFunction>,
    pub body: Vec<PStmt>,
    pub slots: usize,
    pub range_lo: Slot,
    pub range_hi: Slot,
    pub range_checks: bool,
    pub negative_indices: bool,
    pub guards: Vec<GuardStat>,
}

impl PExpr {
    pub fn int(i: i64) -> PExpr {
        PExpr::Const(Scalar::Int(i))
    }

    pub(crate) fn boxed(self) -> Box<PExpr> {
        Box::new(self)
    }

    /// Visits this expression and every sub-expression, parents first.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a PExpr)) {
        f(self);
        match self {
            PExpr::Const(_) | PExpr::Slot(_) => {}
            PExpr::Read { index, .. } => index.walk(f),
            PExpr::Check { value, lo, hi, .. } => {
                value.walk(f);
                lo.walk(f);
                hi.walk(f);
            }
            PExpr::Span { lo, hi, .. } => {
                lo.walk(f);
                hi.walk(f);
            }
            PExpr::WrapNegative { index, len } => {
                index.walk(f);
                len.walk(f);
            }
            PExpr::Binary(_, a, b) | PExpr::Compare(_, a, b) | PExpr::And(a, b) | PExpr::Or(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            PExpr::Not(a) | PExpr::Neg(a) | PExpr::Math(_, a) => a.walk(f),
            PExpr::TagIn { tag, .. } => tag.walk(f),
            PExpr::KindIs { value, .. } => value.walk(f),
            PExpr::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
            PExpr::Let { value, body, .. } => {
                value.walk(f);
                body.walk(f);
            }
            PExpr::Switch { tag, offset, arms, .. } => {
                tag.walk(f);
                offset.walk(f);
                arms.iter().flatten().for_each(|a| a.walk(f));
            }
        }
    }

    /// Rewrites sub-expressions bottom-up.
    pub fn map(self, f: &mut dyn FnMut(PExpr) -> PExpr) -> PExpr {
        fn m(mut e: Box<PExpr>, f: &mut dyn FnMut(PExpr) -> PExpr) -> Box<PExpr> {
            let inner = std::mem::replace(&mut *e, PExpr::Const(Scalar::None));
            *e = inner.map(f);
            e
        }
        let e = match self {
            e @ (PExpr::Const(_) | PExpr::Slot(_)) => e,
            PExpr::Read { col, index } => PExpr::Read { col, index: m(index, f) },
            PExpr::Check { value, lo, hi, extent } => PExpr::Check { value: m(value, f), lo: m(lo, f), hi: m(hi, f), extent },
            PExpr::Span { lo, hi, extent } => PExpr::Span { lo: m(lo, f), hi: m(hi, f), extent },
            PExpr::WrapNegative { index, len } => PExpr::WrapNegative { index: m(index, f), len: m(len, f) },
            PExpr::Binary(op, a, b) => PExpr::Binary(op, m(a, f), m(b, f)),
            PExpr::Compare(op, a, b) => PExpr::Compare(op, m(a, f), m(b, f)),
            PExpr::And(a, b) => PExpr::And(m(a, f), m(b, f)),
            PExpr::Or(a, b) => PExpr::Or(m(a, f), m(b, f)),
            PExpr::Not(a) => PExpr::Not(m(a, f)),
            PExpr::Neg(a) => PExpr::Neg(m(a, f)),
            PExpr::Math(g, a) => PExpr::Math(g, m(a, f)),
            PExpr::TagIn { tag, tags } => PExpr::TagIn { tag: m(tag, f), tags },
            PExpr::KindIs { value, mask } => PExpr::KindIs { value: m(value, f), mask },
            PExpr::Call { func, args } => PExpr::Call { func, args: args.into_iter().map(|a| a.map(f)).collect() },
            PExpr::Let { slot, value, body } => PExpr::Let { slot, value: m(value, f), body: m(body, f) },
            PExpr::Switch { tag, slot, offset, arms } => PExpr::Switch {
                tag: m(tag, f),
                slot,
                offset: m(offset, f),
                arms: arms.into_iter().map(|a| a.map(|a| a.map(f))).collect(),
            },
        };
        f(e)
    }

    /// True if evaluating twice is indistinguishable from evaluating once.
    pub(crate) fn is_pure(&self) -> bool {
        let mut pure = true;
        self.walk(&mut |e| {
            if matches!(e, PExpr::Call { .. } | PExpr::Let { .. } | PExpr::Switch { .. }) {
                pure = false;
            }
        });
        pure
    }

    pub(crate) fn mentions_slot(&self, slot: Slot) -> bool {
        let mut hit = false;
        self.walk(&mut |e| hit |= matches!(e, PExpr::Slot(s) if *s == slot));
        hit
    }
}

impl PStmt {
    /// Visits every expression directly held by this statement and its
    /// nested statements.
    pub fn walk_exprs<'a>(&'a self, f: &mut dyn FnMut(&'a PExpr)) {
        match self {
            PStmt::Assign(_, e) | PStmt::Emit(e) | PStmt::Eval(e) | PStmt::Return(Some(e)) => f(e),
            PStmt::Return(None) => {}
            PStmt::If { cond, then, orelse } => {
                f(cond);
                then.iter().chain(orelse).for_each(|s| s.walk_exprs(f));
            }
            PStmt::Loop { lo, hi, body, .. } => {
                f(lo);
                f(hi);
                body.iter().for_each(|s| s.walk_exprs(f));
            }
            PStmt::Dispatch { arms } => arms.iter().flat_map(|(_, b)| b).for_each(|s| s.walk_exprs(f)),
        }
    }

    /// Rewrites every expression in place.
    pub fn map_exprs(&mut self, f: &mut dyn FnMut(PExpr) -> PExpr) {
        let mut take = |e: &mut PExpr| {
            let old = std::mem::replace(e, PExpr::int(0));
            *e = old.map(f);
        };
        match self {
            PStmt::Assign(_, e) | PStmt::Emit(e) | PStmt::Eval(e) | PStmt::Return(Some(e)) => take(e),
            PStmt::Return(None) => {}
            PStmt::If { cond, then, orelse } => {
                take(cond);
                then.iter_mut().chain(orelse.iter_mut()).for_each(|s| s.map_exprs(f));
            }
            PStmt::Loop { lo, hi, body, .. } => {
                take(lo);
                take(hi);
                body.iter_mut().for_each(|s| s.map_exprs(f));
            }
            PStmt::Dispatch { arms } => arms.iter_mut().flat_map(|(_, b)| b).for_each(|s| s.map_exprs(f)),
        }
    }

    /// Visits this statement and every nested statement, parents first.
    pub fn walk_stmts<'a>(&'a self, f: &mut dyn FnMut(&'a PStmt)) {
        f(self);
        match self {
            PStmt::If { then, orelse, .. } => then.iter().chain(orelse).for_each(|s| s.walk_stmts(f)),
            PStmt::Loop { body, .. } => body.iter().for_each(|s| s.walk_stmts(f)),
            PStmt::Dispatch { arms } => arms.iter().flat_map(|(_, b)| b).for_each(|s| s.walk_stmts(f)),
            _ => {}
        }
    }

    pub(crate) fn contains_return(&self) -> bool {
        match self {
            PStmt::Return(_) => true,
            PStmt::If { then, orelse, .. } => then.iter().chain(orelse).any(PStmt::contains_return),
            PStmt::Loop { body, .. } => body.iter().any(PStmt::contains_return),
            PStmt::Dispatch { arms } => arms.iter().flat_map(|(_, b)| b).any(PStmt::contains_return),
            _ => false,
        }
    }
}

impl Plan {
    /// Every statement of the plan: the event loop and all functions.
    pub fn all_statements(&self) -> impl Iterator<Item = &PStmt> {
        self.body.iter().chain(self.functions.iter().flat_map(|f| &f.body))
    }

    /// Columns that some read in the plan can touch.
    pub fn referenced_columns(&self) -> std::collections::BTreeSet<String> {
        let mut ids = std::collections::BTreeSet::new();
        for s in self.all_statements() {
            s.walk_exprs(&mut |e| {
                e.walk(&mut |e| {
                    if let PExpr::Read { col, .. } = e {
                        ids.insert(*col);
                    }
                })
            });
        }
        ids.into_iter().map(|c| self.columns[c].clone()).collect()
    }

    /// Every column the plan needs present: read columns plus those whose
    /// lengths bound checked loops.
    pub fn required_columns(&self) -> std::collections::BTreeSet<String> {
        fn extents(s: &PStmt, out: &mut Vec<ColRef>) {
            match s {
                PStmt::Loop { extent, body, .. } => {
                    out.extend(extent.iter().map(|(c, _)| *c));
                    body.iter().for_each(|s| extents(s, out));
                }
                PStmt::If { then, orelse, .. } => then.iter().chain(orelse).for_each(|s| extents(s, out)),
                PStmt::Dispatch { arms } => arms.iter().flat_map(|(_, b)| b).for_each(|s| extents(s, out)),
                _ => {}
            }
        }
        let mut ids = Vec::new();
        self.all_statements().for_each(|s| extents(s, &mut ids));
        let mut out = self.referenced_columns();
        out.extend(ids.into_iter().map(|c| self.columns[c].clone()));
        out
    }

    /// Number of column-read nodes in the plan.
    pub fn read_nodes(&self) -> usize {
        let mut n = 0;
        for s in self.all_statements() {
            s.walk_exprs(&mut |e| e.walk(&mut |e| n += matches!(e, PExpr::Read { .. }) as usize));
        }
        n
    }

    /// Number of loops, nested ones included.
    pub fn loop_count(&self) -> usize {
        let mut n = 0;
        for s in self.all_statements() {
            s.walk_stmts(&mut |s| n += matches!(s, PStmt::Loop { .. }) as usize);
        }
        n
    }
}
