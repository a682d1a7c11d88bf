//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use colnest_core::bench::{Engine, Prepared};
use colnest_core::codec::{decode_all, random_access, union_offsets, ColumnData, ColumnStore, Encoder, PathStep, Value};
use colnest_core::exec::{event_count, run_columnar, run_materialized, Scalar, Sink};
use colnest_core::generate::{event_schema, generate, GeneratorConfig, PREFIX};
use colnest_core::queries::{nested_sum_schema, QueryId, NESTED_SUM};
use colnest_core::query::parse;
use colnest_core::schema::Schema;
use colnest_core::transform::{compile, compile_source, CompileOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{event, event_store, muon, random_schema, random_value, LIMITS};

// Pinned tolerances and sizes.
const ROUND_TRIP_CASES: usize = 1000;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);
const UNION_TAG_ARRAYS: usize = 1000;
const ORACLE_EVENTS: usize = 10_000;
const PERF_EVENTS: usize = 1_000_000;
const PERF_REPEATS: usize = 3;
const PERF_BUDGET: Duration = Duration::from_secs(300);
const MIN_COLUMNAR_SPEEDUP: f64 = 3.0;
const MIN_PT_SUM_OVER_MASS: f64 = 1.5;
const MASS_TOLERANCE: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn codec_round_trip() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c0de);
    let mut values_checked = 0;
    for case in 0..ROUND_TRIP_CASES {
        let depth = rng.gen_range(1..=LIMITS.depth);
        let schema = random_schema(&mut rng, depth, &LIMITS);
        ensure!(schema.depth() <= LIMITS.depth, "case {case}: generated depth {} for {schema}", schema.depth());
        let n = rng.gen_range(0..=4);
        let values: Vec<Value> = (0..n).map(|_| random_value(&mut rng, &schema, &LIMITS)).collect();
        let mut store = ColumnStore::new();
        let mut encoder = Encoder::new(&mut store, &schema, "x").map_err(|e| format!("case {case}: {e}"))?;
        for v in &values {
            encoder.push(v).map_err(|e| format!("case {case}: {e}"))?;
        }
        let back = decode_all(&store, &schema, "x").map_err(|e| format!("case {case} ({schema}): {e}"))?;
        ensure!(back == values, "case {case}: {schema} did not round trip");
        values_checked += n;
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < ROUND_TRIP_BUDGET, "took {elapsed:?}");
    Ok(format!("{ROUND_TRIP_CASES} schemas, {values_checked} values bit-exact in {elapsed:.2?}"))
}

fn worked_fixture() -> Outcome {
    let schema = Schema::list(Schema::list(Schema::float64()));
    let value = Value::List(vec![Value::floats([1.1, 2.2]), Value::floats([]), Value::floats([3.3])]);
    let mut store = ColumnStore::new();
    Encoder::new(&mut store, &schema, "x").and_then(|mut e| e.push(&value)).map_err(|e| e.to_string())?;
    let col = |name: &str| store.column(name).map(|c| c.data().clone());
    ensure!(col("x-Lo") == Some(ColumnData::Int64(vec![0, 3])), "x-Lo = {:?}", col("x-Lo"));
    ensure!(col("x-Ld-Lo") == Some(ColumnData::Int64(vec![0, 2, 2, 3])), "x-Ld-Lo = {:?}", col("x-Ld-Lo"));
    ensure!(col("x-Ld-Ld") == Some(ColumnData::Float64(vec![1.1, 2.2, 3.3])), "x-Ld-Ld = {:?}", col("x-Ld-Ld"));
    ensure!(store.len() == 3, "unexpected columns {:?}", store.names().collect::<Vec<_>>());
    let got = random_access(&store, &schema, "x", &[PathStep::Index(0), PathStep::Index(1)]).map_err(|e| e.to_string())?;
    ensure!(got == Value::Float(2.2), "random_access(0, 1) = {got:?}");
    Ok("x-Lo=[0,3] x-Ld-Lo=[0,2,2,3] x-Ld-Ld=[1.1,2.2,3.3], element (0,1) = 2.2".into())
}

fn union_offset_cases() -> Outcome {
    let fixed = union_offsets(&[0, 1, 0, 0, 1], 2).map_err(|e| e.to_string())?;
    ensure!(fixed == vec![0, 0, 1, 2, 1], "fixture gave {fixed:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..UNION_TAG_ARRAYS {
        let alts = rng.gen_range(1..=8usize);
        let tags: Vec<u8> = (0..rng.gen_range(0..64)).map(|_| rng.gen_range(0..alts) as u8).collect();
        let offsets = union_offsets(&tags, alts).map_err(|e| e.to_string())?;
        for t in 0..alts as u8 {
            let mine: Vec<i64> = tags.iter().zip(&offsets).filter(|(&x, _)| x == t).map(|(_, &o)| o).collect();
            ensure!(mine.iter().copied().eq(0..mine.len() as i64), "case {case}: tag {t} offsets {mine:?}");
        }
    }
    Ok(format!("fixture matches; {UNION_TAG_ARRAYS} random tag arrays grouped consecutively"))
}

fn oracle_equivalence() -> Outcome {
    let store = generate(&GeneratorConfig::new(ORACLE_EVENTS, 2024));
    let n = event_count(&store, PREFIX).map_err(|e| e.to_string())?;
    let schema = event_schema();
    let mut runs = 0;
    for q in QueryId::ALL {
        let program = parse(q.source()).map_err(|e| format!("{q}: {}", e.message))?;
        let (reference, _) = run_materialized(&program, &store, &schema, PREFIX, 0..n).map_err(|e| format!("{q}: {e}"))?;
        for range_checks in [true, false] {
            for eliminate_zero_lookups in [true, false] {
                for flatten_loops in [true, false] {
                    let options = CompileOptions { range_checks, eliminate_zero_lookups, flatten_loops, negative_indices: None };
                    let plan = compile(&program, &schema, PREFIX, options).map_err(|e| format!("{q}: {e}"))?;
                    let (sink, _) = run_columnar(&plan, &store, 0..n).map_err(|e| format!("{q} {options:?}: {e}"))?;
                    ensure!(sink == reference, "{q} with {options:?}: {} vs {} values", sink.len(), reference.len());
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("{runs} plan variants over {n} events match the interpreter bit for bit"))
}

fn best_rate(prepared: &Prepared, engine: Engine, store: &ColumnStore, n: usize) -> Result<f64, String> {
    let mut best = Duration::MAX;
    for _ in 0..PERF_REPEATS {
        let started = Instant::now();
        std::hint::black_box(prepared.run(engine, store).map_err(|e| e.to_string())?);
        best = best.min(started.elapsed());
    }
    Ok(n as f64 / best.as_secs_f64())
}

fn performance_ordering() -> Outcome {
    let started = Instant::now();
    let store = generate(&GeneratorConfig::new(PERF_EVENTS, 1));
    let mut rates = Vec::new();
    for q in QueryId::ALL {
        let prepared = Prepared::new(q).map_err(|e| e.to_string())?;
        prepared.cross_check(&store).map_err(|e| e.to_string())?;
        rates.push((q, best_rate(&prepared, Engine::ColumnarUnchecked, &store, PERF_EVENTS)?));
    }
    let materialized = best_rate(&Prepared::new(QueryId::MaxPt).map_err(|e| e.to_string())?, Engine::Materialized, &store, PERF_EVENTS)?;
    let rate = |q: QueryId| rates.iter().find(|(x, _)| *x == q).map(|(_, r)| *r).unwrap();
    let table: Vec<String> = rates.iter().map(|(q, r)| format!("{q} {:.1} MHz", r / 1e6)).collect();
    let summary = format!("{}; materialized max-pt {:.2} MHz", table.join(", "), materialized / 1e6);

    let speedup = rate(QueryId::MaxPt) / materialized;
    ensure!(speedup >= MIN_COLUMNAR_SPEEDUP, "columnar/materialized on max-pt = {speedup:.2} < {MIN_COLUMNAR_SPEEDUP}; {summary}");
    let slowest = rates.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    ensure!(slowest == QueryId::MassOfPairs, "slowest is {slowest}; {summary}");
    let ratio = rate(QueryId::PtSumOfPairs) / rate(QueryId::MassOfPairs);
    ensure!(ratio > MIN_PT_SUM_OVER_MASS, "pt-sum/mass = {ratio:.2}; {summary}");
    let elapsed = started.elapsed();
    ensure!(elapsed < PERF_BUDGET, "took {elapsed:?}");
    Ok(format!("{summary}; speedup {speedup:.1}x, pt-sum/mass {ratio:.2}, {elapsed:.1?}"))
}

fn selective_read() -> Outcome {
    let store = generate(&GeneratorConfig::new(1000, 9)).instrumented(true);
    let plan = compile_source(QueryId::MaxPt.source(), &event_schema(), PREFIX, CompileOptions::default())
        .map_err(|e| e.to_string())?;
    run_columnar(&plan, &store, 0..1000).map_err(|e| e.to_string())?;
    let counts = store.read_counts().ok_or("store not instrumented")?;
    let muon = |f: &str| counts[&format!("events-Ld-R_muons-Ld-R_{f}")];
    ensure!(muon("eta") == 0 && muon("phi") == 0, "eta {} phi {}", muon("eta"), muon("phi"));
    ensure!(muon("pt") > 0, "pt never read");
    let touched = store.touched_columns();
    let stray: Vec<&String> = touched.iter().filter(|c| !c.ends_with("-Lo") && !c.ends_with("R_pt")).collect();
    ensure!(stray.is_empty(), "unexpected reads of {stray:?}");
    Ok(format!("touched {touched:?}; pt reads {}", muon("pt")))
}

fn mass_value() -> Outcome {
    let store = event_store(&event_schema(), vec![event(vec![muon(1.0, 0.0, 0.0), muon(2.0, 0.0, std::f64::consts::PI)])]);
    let expected = 8f64.sqrt();
    let prepared = Prepared::new(QueryId::MassOfPairs).map_err(|e| e.to_string())?;
    for engine in Engine::ALL {
        let sink = prepared.run(engine, &store).map_err(|e| e.to_string())?;
        let [Scalar::Float(m)] = sink.values() else {
            return Err(format!("{engine} emitted {:?}", sink.values()));
        };
        ensure!((m - expected).abs() <= MASS_TOLERANCE, "{engine}: {m} vs {expected}");
    }
    Ok(format!("all engines emit {expected:.15} within {MASS_TOLERANCE:e}"))
}

fn safety() -> Outcome {
    let mut store = generate(&GeneratorConfig::new(100, 5));
    let name = "events-Ld-R_muons-Lo";
    let data = store.column("events-Ld-R_muons-Ld-R_pt").unwrap().len() as i64;
    let mut offsets = store.column(name).unwrap().data().as_i64().unwrap().to_vec();
    offsets[1] = data + 1000;
    store.insert_column(name, ColumnData::Int64(offsets));

    let mut notes = Vec::new();
    for q in QueryId::ALL {
        let checked = compile_source(q.source(), &event_schema(), PREFIX, CompileOptions::default()).map_err(|e| e.to_string())?;
        match run_columnar(&checked, &store, 0..100) {
            Err(f) if f.error.kind() == "RangeError" && f.partial.is_empty() && f.event == 0 => {}
            Err(f) => return Err(format!("{q}: {f}")),
            Ok((sink, _)) => return Err(format!("{q}: no error, {} values emitted", sink.len())),
        }
        // Unchecked plans skip extent checks; slices still stop reads past a column end.
        let unchecked = compile_source(q.source(), &event_schema(), PREFIX, CompileOptions::unchecked()).map_err(|e| e.to_string())?;
        let outcome = match run_columnar(&unchecked, &store, 0..100) {
            Ok((sink, _)) => format!("ok/{}", sink.len()),
            Err(f) => format!("{}/{}", f.error.kind(), f.partial.len()),
        };
        notes.push(format!("{q} {outcome}"));
    }
    Ok(format!("checked: RangeError at event 0 with empty sink for all queries; unchecked: {}", notes.join(", ")))
}

fn compile_errors() -> Outcome {
    let schema = event_schema();
    let cases = [
        ("emit a List", "def f(event) {\n  emit(event.muons)\n}", 2),
        ("subscript a Record", "def f(event) {\n  x = 1\n  y = event[0]\n}", 3),
        ("computed isinstance type", "def f(event) {\n  t = 1\n  emit(isinstance(event, t))\n}", 3),
        ("recursion", "def f(event) { emit(g(3)) }\ndef g(n) {\n  return g(n - 1)\n}", 3),
    ];
    let mut seen = Vec::new();
    for (what, src, line) in cases {
        match compile_source(src, &schema, PREFIX, CompileOptions::default()) {
            Err(e) if e.pos.line == line && e.pos.col > 0 => seen.push(format!("{what} @{}", e.pos)),
            Err(e) => return Err(format!("{what}: wrong position {e}")),
            Ok(_) => return Err(format!("{what}: compiled")),
        }
    }
    Ok(seen.join(", "))
}

fn offset_reads(store: &ColumnStore) -> u64 {
    store.read_counts().unwrap().iter().filter(|(c, _)| c.ends_with("-Lo")).map(|(_, n)| n).sum()
}

fn loop_flattening() -> Outcome {
    let schema = nested_sum_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let events: Vec<Value> = (0..2000)
        .map(|_| {
            let groups = (0..rng.gen_range(0..6))
                .map(|_| Value::floats((0..rng.gen_range(0..5)).map(|_| rng.gen_range(-10.0..10.0))))
                .collect();
            Value::record([("groups", Value::List(groups))])
        })
        .collect();
    let store = event_store(&schema, events).instrumented(true);
    let n = event_count(&store, PREFIX).map_err(|e| e.to_string())?;
    let run = |flatten_loops: bool| -> Result<(Sink, u64, usize), String> {
        let options = CompileOptions { flatten_loops, ..CompileOptions::default() };
        let plan = compile_source(NESTED_SUM, &schema, PREFIX, options).map_err(|e| e.to_string())?;
        store.reset_read_counts();
        let (sink, _) = run_columnar(&plan, &store, 0..n).map_err(|e| e.to_string())?;
        Ok((sink, offset_reads(&store), plan.loop_count()))
    };
    let (flat, flat_reads, flat_loops) = run(true)?;
    let (nested, nested_reads, nested_loops) = run(false)?;
    let program = parse(NESTED_SUM).map_err(|e| e.message)?;
    let (reference, _) = run_materialized(&program, &store, &schema, PREFIX, 0..n).map_err(|e| e.to_string())?;
    ensure!(flat == nested && nested == reference, "sinks differ");
    ensure!(flat_loops < nested_loops, "loops {flat_loops} vs {nested_loops}");
    ensure!(flat_reads < nested_reads, "offset reads {flat_reads} vs {nested_reads}");
    Ok(format!("loops {nested_loops} -> {flat_loops}, offset reads {nested_reads} -> {flat_reads}, sinks equal"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("codec round trip", codec_round_trip),
        ("worked encoding fixture", worked_fixture),
        ("union offsets", union_offset_cases),
        ("oracle equivalence", oracle_equivalence),
        ("performance ordering", performance_ordering),
        ("selective read", selective_read),
        ("mass value", mass_value),
        ("safety", safety),
        ("compile-error surface", compile_errors),
        ("loop flattening", loop_flattening),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
