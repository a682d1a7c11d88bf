//! Timing the benchmark queries on the columnar engine and the
//! materializing interpreter.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::codec::ColumnStore;
use crate::exec::{event_count, run_columnar, run_materialized, ExecError, RunFailure, Sink};
use crate::generate::{event_schema, PREFIX};
use crate::query::{parse, Program};
use crate::queries::QueryId;
use crate::transform::{compile, CompileError, CompileOptions, Plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Engine {
    Columnar,
    /// Columnar without subscript and loop-extent checks.
    ColumnarUnchecked,
    Materialized,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Columnar, Engine::ColumnarUnchecked, Engine::Materialized];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Columnar => "columnar",
            Engine::ColumnarUnchecked => "columnar-unchecked",
            Engine::Materialized => "materialized",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Engine, String> {
        Engine::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown engine {s:?} (expected columnar, columnar-unchecked or materialized)"))
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{query} does not compile: {error}")]
    Compile { query: QueryId, error: CompileError },
    #[error("{query} on {engine}: {failure}")]
    Run { query: QueryId, engine: Engine, failure: RunFailure },
    #[error(transparent)]
    Store(#[from] ExecError),
    #[error("{query}: {engine} emitted {found} values, columnar emitted {expected}{detail}")]
    Mismatch { query: QueryId, engine: Engine, expected: usize, found: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    /// Timed runs; the fastest is reported.
    pub repeats: usize,
    /// Run once more on an instrumented copy of the store to count reads.
    pub count_reads: bool,
    /// Check that every engine emits the same sink before timing.
    pub cross_check: bool,
}

impl Default for BenchOptions {
    fn default() -> BenchOptions {
        BenchOptions { repeats: 3, count_reads: false, cross_check: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub query: QueryId,
    pub engine: Engine,
    pub events: usize,
    pub emitted: usize,
    pub wall: Duration,
    pub read_counts: Option<BTreeMap<String, u64>>,
}

impl BenchReport {
    pub fn events_per_second(&self) -> f64 {
        self.events as f64 / self.wall.as_secs_f64().max(1e-9)
    }
}

/// A query ready to run on any engine.
pub struct Prepared {
    pub query: QueryId,
    pub program: Program,
    pub checked: Plan,
    pub unchecked: Plan,
}

impl Prepared {
    pub fn new(query: QueryId) -> Result<Prepared, BenchError> {
        let wrap = |error| BenchError::Compile { query, error };
        let program = parse(query.source())
            .map_err(|e| wrap(CompileError::new(e.pos, format!("syntax error: {}", e.message))))?;
        let schema = event_schema();
        let checked = compile(&program, &schema, PREFIX, CompileOptions::default()).map_err(wrap)?;
        let unchecked = compile(&program, &schema, PREFIX, CompileOptions::unchecked()).map_err(wrap)?;
        Ok(Prepared { query, program, checked, unchecked })
    }

    pub fn run(&self, engine: Engine, store: &ColumnStore) -> Result<Sink, BenchError> {
        let n = event_count(store, PREFIX)?;
        let out = match engine {
            Engine::Columnar => run_columnar(&self.checked, store, 0..n),
            Engine::ColumnarUnchecked => run_columnar(&self.unchecked, store, 0..n),
            Engine::Materialized => run_materialized(&self.program, store, &event_schema(), PREFIX, 0..n),
        };
        out.map(|(sink, _)| sink).map_err(|failure| BenchError::Run { query: self.query, engine, failure })
    }

    /// Runs every engine and fails unless all sinks are bit-identical.
    pub fn cross_check(&self, store: &ColumnStore) -> Result<Sink, BenchError> {
        let expected = self.run(Engine::Columnar, store)?;
        for engine in [Engine::ColumnarUnchecked, Engine::Materialized] {
            let found = self.run(engine, store)?;
            if found != expected {
                let detail = match expected.values().iter().zip(found.values()).position(|(a, b)| a != b) {
                    Some(i) => format!(", first difference at value {i}: {} vs {}", expected.values()[i], found.values()[i]),
                    None => String::new(),
                };
                return Err(BenchError::Mismatch {
                    query: self.query,
                    engine,
                    expected: expected.len(),
                    found: found.len(),
                    detail,
                });
            }
        }
        Ok(expected)
    }

    pub fn bench(&self, engine: Engine, store: &ColumnStore, options: BenchOptions) -> Result<BenchReport, BenchError> {
        let emitted = if options.cross_check { self.cross_check(store)?.len() } else { self.run(engine, store)?.len() };
        let mut best = Duration::MAX;
        for _ in 0..options.repeats.max(1) {
            let started = Instant::now();
            let sink = self.run(engine, store)?;
            best = best.min(started.elapsed());
            std::hint::black_box(sink);
        }
        let read_counts = if options.count_reads {
            let counted = store.clone().instrumented(true);
            counted.reset_read_counts();
            self.run(engine, &counted)?;
            counted.read_counts()
        } else {
            None
        };
        Ok(BenchReport { query: self.query, engine, events: event_count(store, PREFIX)?, emitted, wall: best, read_counts })
    }
}

/// Store load is not part of the timing; `store` is expected in memory.
pub fn bench(query: QueryId, engine: Engine, store: &ColumnStore, options: BenchOptions) -> Result<BenchReport, BenchError> {
    Prepared::new(query)?.bench(engine, store, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorConfig};

    #[test]
    fn engines_agree_and_report() {
        let store = generate(&GeneratorConfig::new(2_000, 42));
        for q in QueryId::ALL {
            let options = BenchOptions { repeats: 1, count_reads: true, cross_check: true };
            let report = bench(q, Engine::ColumnarUnchecked, &store, options).unwrap();
            assert_eq!(report.events, 2_000);
            assert!(report.emitted > 0);
            assert!(report.events_per_second() > 0.0);
            let counts = report.read_counts.unwrap();
            assert!(counts["events-Ld-R_muons-Ld-R_pt"] > 0, "{q}");
        }
    }

    #[test]
    fn max_pt_reads_only_pt() {
        let store = generate(&GeneratorConfig::new(500, 1));
        let options = BenchOptions { repeats: 1, count_reads: true, cross_check: false };
        let counts = bench(QueryId::MaxPt, Engine::Columnar, &store, options).unwrap().read_counts.unwrap();
        assert_eq!(counts["events-Ld-R_muons-Ld-R_eta"], 0);
        assert_eq!(counts["events-Ld-R_muons-Ld-R_phi"], 0);
    }

    #[test]
    fn engine_names() {
        for e in Engine::ALL {
            assert_eq!(e.name().parse::<Engine>(), Ok(e));
        }
        assert!("fast".parse::<Engine>().is_err());
    }
}
