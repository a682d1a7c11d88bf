//! Running queries: plans directly over columns, and source programs over
//! decoded values (the reference interpreter).

mod columnar;
mod materialized;
mod scalar;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use thiserror::Error;

pub use columnar::{run_columnar, run_columnar_parallel, selective_read_profile};
pub use materialized::run_materialized;
pub use scalar::{binary, compare, kind, math, negate, MathFn, Scalar};

use crate::codec::ColumnStore;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("range error: {0}")]
    Range(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("division by zero: {0}")]
    ZeroDivision(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("value error: {0}")]
    Value(String),
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("malformed store: {0}")]
    Malformed(String),
}

impl ExecError {
    /// Short name of the error category, for comparing engines.
    pub fn kind(&self) -> &'static str {
        match self {
            ExecError::Range(_) => "RangeError",
            ExecError::Type(_) => "TypeError",
            ExecError::ZeroDivision(_) => "ZeroDivisionError",
            ExecError::Overflow(_) => "OverflowError",
            ExecError::Value(_) => "ValueError",
            ExecError::MissingColumn(_) => "MissingColumn",
            ExecError::Malformed(_) => "Malformed",
        }
    }
}

/// Emitted values in event order, then program order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sink {
    values: Vec<Scalar>,
}

impl Sink {
    pub fn new() -> Sink {
        Sink::default()
    }

    pub fn push(&mut self, value: Scalar) {
        self.values.push(value);
    }

    pub fn extend(&mut self, other: Sink) {
        self.values.extend(other.values);
    }

    pub fn values(&self) -> &[Scalar] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Newline-delimited text, floats with 17 significant digits.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|v| format!("{v}\n")).collect()
    }
}

impl From<Vec<Scalar>> for Sink {
    fn from(values: Vec<Scalar>) -> Sink {
        Sink { values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub events: usize,
    pub wall: Duration,
    /// Element reads per column during this run; only for instrumented stores.
    pub read_counts: Option<BTreeMap<String, u64>>,
}

impl RunReport {
    pub fn events_per_second(&self) -> f64 {
        self.events as f64 / self.wall.as_secs_f64().max(1e-9)
    }
}

/// A run that stopped on an error, with what was emitted before it.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct RunFailure {
    pub error: ExecError,
    /// Event being processed when the error occurred.
    pub event: usize,
    pub partial: Sink,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (event {}, after {} emitted values)", self.error, self.event, self.partial.len())
    }
}

pub type RunResult = Result<(Sink, RunReport), RunFailure>;

/// Number of events stored under `prefix`: the items of every outer list,
/// `Lo[last] - Lo[0]`. An offsets column holding just `[0]` stores none.
pub fn event_count(store: &ColumnStore, prefix: &str) -> Result<usize, ExecError> {
    let name = format!("{prefix}{}Lo", crate::schema::DELIMITER);
    let col = store.column(&name).ok_or_else(|| ExecError::MissingColumn(name.clone()))?;
    let offsets = col.data().as_i64().ok_or_else(|| ExecError::Malformed(format!("{name} is not an offsets column")))?;
    match (offsets.first(), offsets.last()) {
        (Some(&first), Some(&last)) if last >= first => Ok((last - first) as usize),
        (Some(_), Some(_)) => Err(ExecError::Malformed(format!("{name} decreases"))),
        _ => Err(ExecError::Malformed(format!("{name} is empty"))),
    }
}

fn check_range(store: &ColumnStore, prefix: &str, events: &std::ops::Range<usize>) -> Result<(), ExecError> {
    let n = event_count(store, prefix)?;
    if events.start > events.end || events.end > n {
        return Err(ExecError::Range(format!("event range {}..{} outside 0..{n}", events.start, events.end)));
    }
    Ok(())
}
