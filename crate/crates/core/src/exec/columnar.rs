use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::time::Instant;

use crate::codec::{union_offsets, ColumnData, ColumnStore};
use crate::transform::{ColRef, LoopKind, PExpr, PStmt, Plan};

use super::scalar::{binary, compare, math, negate, Scalar};
use super::{check_range, ExecError, RunFailure, RunReport, RunResult, Sink};

#[derive(Clone, Copy)]
enum Col<'s> {
    I64(&'s [i64]),
    F64(&'s [f64]),
    U8(&'s [u8]),
    Bool(&'s [bool]),
    Missing,
}

impl Col<'_> {
    fn len(&self) -> usize {
        match self {
            Col::I64(v) => v.len(),
            Col::F64(v) => v.len(),
            Col::U8(v) => v.len(),
            Col::Bool(v) => v.len(),
            Col::Missing => 0,
        }
    }
}

fn col_of(data: &ColumnData) -> Col<'_> {
    match data {
        ColumnData::Int64(v) => Col::I64(v),
        ColumnData::Float64(v) => Col::F64(v),
        ColumnData::UInt8(v) => Col::U8(v),
        ColumnData::Bool(v) => Col::Bool(v),
    }
}

/// Union offsets missing from the store are derived from the tags.
fn derive_missing(plan: &Plan, store: &ColumnStore) -> Result<Vec<Option<Vec<i64>>>, ExecError> {
    let required = plan.required_columns();
    plan.columns
        .iter()
        .map(|name| {
            if store.column(name).is_some() {
                return Ok(None);
            }
            let tags = name.strip_suffix("Uo").map(|p| format!("{p}Ut"));
            match tags.as_deref().and_then(|t| store.column(t)).and_then(|c| c.data().as_u8()) {
                Some(tags) => union_offsets(tags, 256).map(Some).map_err(|e| ExecError::Malformed(e.to_string())),
                None if required.contains(name) => Err(ExecError::MissingColumn(name.clone())),
                None => Ok(None),
            }
        })
        .collect()
}

enum Flow {
    Normal,
    Return(Scalar),
}

struct Machine<'a> {
    plan: &'a Plan,
    cols: Vec<Col<'a>>,
    slots: Vec<Scalar>,
    reads: Option<Vec<u64>>,
    sink: Sink,
    event: usize,
}

impl<'a> Machine<'a> {
    #[inline]
    fn read(&mut self, col: usize, i: i64) -> Result<Scalar, ExecError> {
        let c = self.cols[col];
        if i < 0 || i as usize >= c.len() {
            if let Col::Missing = c {
                return Err(ExecError::MissingColumn(self.plan.columns[col].clone()));
            }
            return Err(ExecError::Range(format!(
                "index {i} beyond the end of column {} (length {})",
                self.plan.columns[col],
                c.len()
            )));
        }
        if let Some(r) = &mut self.reads {
            r[col] += 1;
        }
        let i = i as usize;
        Ok(match c {
            Col::I64(v) => Scalar::Int(v[i]),
            Col::F64(v) => Scalar::Float(v[i]),
            Col::U8(v) => Scalar::Int(v[i] as i64),
            Col::Bool(v) => Scalar::Bool(v[i]),
            Col::Missing => unreachable!("length 0"),
        })
    }

    /// Stored items `lo..hi` must lie inside the columns of `extent`.
    fn check_span(&self, lo: i64, hi: i64, extent: &[(ColRef, usize)]) -> Result<(), ExecError> {
        if extent.is_empty() {
            return Ok(());
        }
        let limit = extent.iter().map(|(c, sub)| self.cols[*c].len().saturating_sub(*sub)).min().unwrap_or(0);
        if lo < 0 || hi < lo || hi as usize > limit {
            return Err(ExecError::Range(format!("stored items {lo}..{hi} exceed the {limit} stored items")));
        }
        Ok(())
    }

    fn eval(&mut self, e: &PExpr) -> Result<Scalar, ExecError> {
        Ok(match e {
            PExpr::Const(s) => *s,
            PExpr::Slot(s) => self.slots[*s],
            PExpr::Read { col, index } => {
                let i = self.eval(index)?.as_index()?;
                self.read(*col, i)?
            }
            PExpr::Check { value, lo, hi, extent } => {
                let v = self.eval(value)?;
                let i = v.as_index()?;
                let lo = self.eval(lo)?.as_index()?;
                let hi = self.eval(hi)?.as_index()?;
                self.check_span(lo, hi, extent)?;
                if i < lo || i >= hi {
                    return Err(ExecError::Range("list index out of range".into()));
                }
                v
            }
            PExpr::Span { lo, hi, extent } => {
                let lo = self.eval(lo)?.as_index()?;
                let hi = self.eval(hi)?.as_index()?;
                self.check_span(lo, hi, extent)?;
                Scalar::Int(hi - lo)
            }
            PExpr::WrapNegative { index, len } => match self.eval(index)? {
                Scalar::Int(i) if i < 0 => {
                    let n = self.eval(len)?.as_index()?;
                    Scalar::Int(i.checked_add(n).ok_or_else(|| ExecError::Range("list index out of range".into()))?)
                }
                Scalar::Int(i) => Scalar::Int(i),
                other => return Err(ExecError::Type(format!("indices must be integers, not {}", other.type_name()))),
            },
            PExpr::Binary(op, a, b) => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                binary(*op, x, y)?
            }
            PExpr::Compare(op, a, b) => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                compare(*op, x, y)?
            }
            PExpr::And(a, b) => {
                let x = self.eval(a)?;
                if x.truthy() {
                    self.eval(b)?
                } else {
                    x
                }
            }
            PExpr::Or(a, b) => {
                let x = self.eval(a)?;
                if x.truthy() {
                    x
                } else {
                    self.eval(b)?
                }
            }
            PExpr::Not(a) => Scalar::Bool(!self.eval(a)?.truthy()),
            PExpr::Neg(a) => negate(self.eval(a)?)?,
            PExpr::Math(f, a) => math(*f, self.eval(a)?)?,
            PExpr::TagIn { tag, tags } => {
                let t = self.eval(tag)?.as_index()?;
                Scalar::Bool(tags.iter().any(|&x| x as i64 == t))
            }
            PExpr::KindIs { value, mask } => Scalar::Bool(self.eval(value)?.kind_bit() & mask != 0),
            PExpr::Call { func, args } => {
                let f = &self.plan.functions[*func];
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(a)?);
                }
                for (p, v) in f.params.iter().zip(values) {
                    self.slots[*p] = v;
                }
                match self.block(&f.body)? {
                    Flow::Return(v) => v,
                    Flow::Normal => Scalar::None,
                }
            }
            PExpr::Let { slot, value, body } => {
                self.slots[*slot] = self.eval(value)?;
                self.eval(body)?
            }
            PExpr::Switch { tag, slot, offset, arms } => {
                let t = self.eval(tag)?.as_index()?;
                self.slots[*slot] = self.eval(offset)?;
                match usize::try_from(t).ok().and_then(|t| arms.get(t)) {
                    Some(Some(arm)) => self.eval(arm)?,
                    _ => return Err(ExecError::Malformed(format!("union tag {t} has no compiled alternative"))),
                }
            }
        })
    }

    fn block(&mut self, stmts: &[PStmt]) -> Result<Flow, ExecError> {
        for s in stmts {
            if let Flow::Return(v) = self.stmt(s)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, s: &PStmt) -> Result<Flow, ExecError> {
        match s {
            PStmt::Assign(slot, e) => self.slots[*slot] = self.eval(e)?,
            PStmt::Emit(e) => {
                let v = self.eval(e)?;
                self.sink.push(v);
            }
            PStmt::Eval(e) => {
                self.eval(e)?;
            }
            PStmt::If { cond, then, orelse } => {
                return if self.eval(cond)?.truthy() { self.block(then) } else { self.block(orelse) };
            }
            PStmt::Loop { var, lo, hi, kind, extent, body } => {
                let lo = self.eval(lo)?.as_index()?;
                let hi = self.eval(hi)?.as_index()?;
                self.check_span(lo, hi, extent)?;
                for i in lo..hi {
                    self.slots[*var] = Scalar::Int(i);
                    if *kind == LoopKind::Event {
                        self.event = i as usize;
                    }
                    if let Flow::Return(v) = self.block(body)? {
                        if *kind != LoopKind::Event {
                            return Ok(Flow::Return(v));
                        }
                    }
                }
            }
            PStmt::Dispatch { arms } => {
                for (assumptions, body) in arms {
                    if assumptions.iter().all(|(s, t)| self.slots[*s] == Scalar::Int(*t as i64)) {
                        return self.block(body);
                    }
                }
                return Err(ExecError::Malformed("no compiled branch matches the union tags".into()));
            }
            PStmt::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e)?,
                    None => Scalar::None,
                };
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }
}

struct Outcome {
    sink: Sink,
    reads: Option<Vec<u64>>,
    error: Option<(ExecError, usize)>,
}

fn execute(plan: &Plan, store: &ColumnStore, derived: &[Option<Vec<i64>>], events: Range<usize>, count: bool) -> Outcome {
    let cols = plan
        .columns
        .iter()
        .zip(derived)
        .map(|(name, d)| match (store.column(name), d) {
            (Some(c), _) => col_of(c.data()),
            (None, Some(v)) => Col::I64(v),
            (None, None) => Col::Missing,
        })
        .collect();
    let mut m = Machine {
        plan,
        cols,
        slots: vec![Scalar::None; plan.slots],
        reads: count.then(|| vec![0; plan.columns.len()]),
        sink: Sink::new(),
        event: events.start,
    };
    m.slots[plan.range_lo] = Scalar::Int(events.start as i64);
    m.slots[plan.range_hi] = Scalar::Int(events.end as i64);
    let error = m.block(&plan.body).err().map(|e| (e, m.event));
    Outcome { sink: m.sink, reads: m.reads, error }
}

fn report(plan: &Plan, store: &ColumnStore, events: usize, started: Instant, reads: Option<Vec<u64>>) -> RunReport {
    let wall = started.elapsed();
    let read_counts = reads.filter(|_| store.is_instrumented()).map(|reads| {
        let mut out = BTreeMap::new();
        for (name, n) in plan.columns.iter().zip(reads) {
            if let Some(id) = store.id(name) {
                store.record_reads(id, n);
            }
            out.insert(name.clone(), n);
        }
        out
    });
    RunReport { events, wall, read_counts }
}

/// Runs a plan over events `events` of `store`. Element reads are counted
/// when the store is instrumented.
pub fn run_columnar(plan: &Plan, store: &ColumnStore, events: Range<usize>) -> RunResult {
    let fail = |error| RunFailure { error, event: events.start, partial: Sink::new() };
    check_range(store, &plan.prefix, &events).map_err(fail)?;
    let derived = derive_missing(plan, store).map_err(fail)?;
    let started = Instant::now();
    let out = execute(plan, store, &derived, events.clone(), store.is_instrumented());
    let report = report(plan, store, events.len(), started, out.reads);
    match out.error {
        Some((error, event)) => Err(RunFailure { error, event, partial: out.sink }),
        None => Ok((out.sink, report)),
    }
}

/// Like [`run_columnar`], split over `threads` disjoint event ranges whose
/// sinks are concatenated in range order.
pub fn run_columnar_parallel(plan: &Plan, store: &ColumnStore, events: Range<usize>, threads: usize) -> RunResult {
    let fail = |error| RunFailure { error, event: events.start, partial: Sink::new() };
    check_range(store, &plan.prefix, &events).map_err(fail)?;
    let derived = derive_missing(plan, store).map_err(fail)?;
    let threads = threads.max(1);
    let chunk = events.len().div_ceil(threads).max(1);
    let ranges: Vec<Range<usize>> = (events.start..events.end)
        .step_by(chunk)
        .map(|s| s..(s + chunk).min(events.end))
        .collect();
    let started = Instant::now();
    let count = store.is_instrumented();
    let outcomes: Vec<Outcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|r| {
                let derived = &derived;
                let r = r.clone();
                scope.spawn(move || execute(plan, store, derived, r, count))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("runner thread panicked")).collect()
    });
    let mut sink = Sink::new();
    let mut reads = count.then(|| vec![0; plan.columns.len()]);
    for out in outcomes {
        if let (Some(total), Some(r)) = (&mut reads, out.reads) {
            total.iter_mut().zip(r).for_each(|(t, n)| *t += n);
        }
        sink.extend(out.sink);
        if let Some((error, event)) = out.error {
            report(plan, store, events.len(), started, reads);
            return Err(RunFailure { error, event, partial: sink });
        }
    }
    Ok((sink, report(plan, store, events.len(), started, reads)))
}

/// Columns read at least once when running `plan` over every event.
pub fn selective_read_profile(plan: &Plan, store: &ColumnStore) -> Result<BTreeSet<String>, RunFailure> {
    let n = super::event_count(store, &plan.prefix).map_err(|error| RunFailure { error, event: 0, partial: Sink::new() })?;
    let derived = derive_missing(plan, store).map_err(|error| RunFailure { error, event: 0, partial: Sink::new() })?;
    let out = execute(plan, store, &derived, 0..n, true);
    if let Some((error, event)) = out.error {
        return Err(RunFailure { error, event, partial: out.sink });
    }
    let reads = out.reads.unwrap_or_default();
    Ok(plan.columns.iter().zip(reads).filter(|(_, n)| *n > 0).map(|(c, _)| c.clone()).collect())
}
