use super::*;
use crate::codec::{encode, ColumnStore, Value};
use crate::exec::{run_columnar, run_materialized, ExecError, Scalar};
use crate::query::parse;

fn muon_schema() -> Schema {
    Schema::record([("pt", Schema::float64()), ("eta", Schema::float64()), ("phi", Schema::float64())])
}

fn event_schema() -> Schema {
    Schema::record([("muons", Schema::list(muon_schema()))])
}

fn muon(pt: f64, eta: f64, phi: f64) -> Value {
    Value::record([("pt", Value::Float(pt)), ("eta", Value::Float(eta)), ("phi", Value::Float(phi))])
}

fn event(muons: Vec<Value>) -> Value {
    Value::record([("muons", Value::List(muons))])
}

fn store(schema: &Schema, events: Vec<Value>) -> ColumnStore {
    let mut s = ColumnStore::new();
    encode(&Value::List(events), &Schema::list(schema.clone()), "events", &mut s).unwrap();
    s
}

fn desk() -> ColumnStore {
    store(&event_schema(), vec![event(vec![muon(1.0, 0.5, 0.0), muon(2.0, -0.5, 0.0)]), event(vec![])])
}

fn plan(src: &str, schema: &Schema, options: CompileOptions) -> Plan {
    compile_source(src, schema, "events", options).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

fn compile_err(src: &str, schema: &Schema) -> CompileError {
    compile_source(src, schema, "events", CompileOptions::default()).expect_err(src)
}

/// Runs both engines and checks they agree, values or error kind.
fn run(src: &str, schema: &Schema, s: &ColumnStore, options: CompileOptions) -> Result<Vec<Scalar>, ExecError> {
    let p = plan(src, schema, options);
    let n = crate::exec::event_count(s, "events").unwrap();
    let columnar = run_columnar(&p, s, 0..n);
    let program = parse(src).unwrap();
    let reference = run_materialized(&program, s, schema, "events", 0..n);
    match (columnar, reference) {
        (Ok((a, _)), Ok((b, _))) => {
            assert_eq!(a, b, "{src}\n{}", explain(&p));
            Ok(a.values().to_vec())
        }
        (Err(a), Err(b)) => {
            assert_eq!(a.error.kind(), b.error.kind(), "{src}\n{a}\n{b}");
            assert_eq!(a.partial, b.partial, "{src}");
            Err(a.error)
        }
        (a, b) => panic!("engines disagree on {src}\n{a:?}\n{b:?}\n{}", explain(&p)),
    }
}

fn floats(xs: &[f64]) -> Vec<Scalar> {
    xs.iter().map(|x| Scalar::Float(*x)).collect()
}

fn count_reads(p: &Plan) -> usize {
    p.read_nodes()
}

const MAX_PT: &str = "def max_pt(event) {
    maximum = 0.0
    for muon in event.muons {
        if muon.pt > maximum {
            maximum = muon.pt
        }
    }
    emit(maximum)
}";

#[test]
fn for_over_muons_is_an_offset_loop() {
    let p = plan("def f(event) { for m in event.muons { emit(m.pt) } }", &event_schema(), CompileOptions::default());
    let text = explain(&p);
    assert!(text.contains("loop list"), "{text}");
    assert!(text.contains("events-Ld-R_muons-Lo["), "{text}");
    assert!(text.contains("emit events-Ld-R_muons-Ld-R_pt["), "{text}");
    let out = run("def f(event) { for m in event.muons { emit(m.pt) } }", &event_schema(), &desk(), CompileOptions::default());
    assert_eq!(out.unwrap(), floats(&[1.0, 2.0]));
}

#[test]
fn max_pt_on_desk_data() {
    for options in [CompileOptions::default(), CompileOptions::unchecked(), CompileOptions::default().without_optimizations()] {
        assert_eq!(run(MAX_PT, &event_schema(), &desk(), options).unwrap(), floats(&[2.0, 0.0]));
    }
}

#[test]
fn emitting_a_list_is_an_error() {
    let e = compile_err("def f(event) {\n  emit(event.muons)\n}", &event_schema());
    assert_eq!(e.pos.line, 2);
    assert!(e.message.contains("List"), "{e}");
}

#[test]
fn specialization_per_signature() {
    let schema = Schema::record([
        ("muons", Schema::list(muon_schema())),
        ("jets", Schema::list(Schema::record([("pt", Schema::float64()), ("mass", Schema::float64())]))),
    ]);
    let src = "def f(event) {
        for m in event.muons { emit(pt(m)) }
        for j in event.jets { emit(pt(j)) }
        for m in event.muons { emit(pt(m) + pt(m)) }
    }
    def pt(x) { return x.pt }";
    let p = plan(src, &schema, CompileOptions::default());
    assert_eq!(p.functions.len(), 2);
    let names: Vec<&str> = p.functions.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["pt", "pt"]);

    let once = plan("def f(event) { for m in event.muons { emit(pt(m) * pt(m)) } }\ndef pt(x) { return x.pt }", &schema, CompileOptions::default());
    assert_eq!(once.functions.len(), 1);
}

#[test]
fn subscripts() {
    let s = desk();
    let schema = event_schema();
    let src = "def f(event) { if len(event.muons) > 0 { emit(event.muons[-1].pt); emit(event.muons[0].eta) } }";
    assert_eq!(run(src, &schema, &s, CompileOptions::default()).unwrap(), floats(&[2.0, 0.5]));

    let oob = "def f(event) { emit(event.muons[5].pt) }";
    let err = run(oob, &schema, &s, CompileOptions::default()).unwrap_err();
    assert!(matches!(err, ExecError::Range(_)), "{err}");

    let e = compile_err("def f(event) {\n  x = event[0]\n}", &schema);
    assert_eq!(e.pos.line, 2);
    compile_err("def f(event) { x = event.muons[1.5] }", &schema);
    compile_err("def f(event) { x = event.muons[0].charge }", &schema);
    compile_err("def f(event) { for m in event { emit(1) } }", &schema);
    compile_err("def f(event) { emit(len(3.0)) }", &schema);
}

#[test]
fn negative_index_wraps_only_when_enabled() {
    let checked = plan("def f(event) { emit(event.muons[-1].pt) }", &event_schema(), CompileOptions::default());
    assert!(explain(&checked).contains("wrap("));
    let unchecked = plan("def f(event) { emit(event.muons[-1].pt) }", &event_schema(), CompileOptions::unchecked());
    assert!(!explain(&unchecked).contains("wrap("));
    assert!(!explain(&unchecked).contains("check("));
}

#[test]
fn len_reads_two_offsets() {
    let out = run("def f(event) { emit(len(event.muons)) }", &event_schema(), &desk(), CompileOptions::default());
    assert_eq!(out.unwrap(), vec![Scalar::Int(2), Scalar::Int(0)]);
}

#[test]
fn identity() {
    let schema = Schema::record([
        ("muons", Schema::list(muon_schema())),
        ("jets", Schema::list(muon_schema())),
    ]);
    let s = store(
        &schema,
        vec![Value::record([
            ("muons", Value::List(vec![muon(1.0, 0.0, 0.0), muon(2.0, 0.0, 0.0)])),
            ("jets", Value::List(vec![muon(1.0, 0.0, 0.0)])),
        ])],
    );
    let src = "def f(event) {
        for i in range(len(event.muons)) { emit(event.muons[i] is event.muons[i]) }
        emit(event.muons[0] is event.muons[1])
        emit(event.muons[0] is not event.muons[1])
        emit(event.muons[0] is event.jets[0])
        emit(event.muons[0] is None)
        best = None
        emit(best is None)
    }";
    let b = |x| Scalar::Bool(x);
    assert_eq!(run(src, &schema, &s, CompileOptions::default()).unwrap(), vec![b(true), b(true), b(false), b(true), b(false), b(false), b(true)]);
    let p = plan("def f(event) { emit(event.muons[0] is event.jets[0]) }", &schema, CompileOptions::unchecked());
    assert!(explain(&p).contains("emit False"), "{}", explain(&p));
    compile_err("def f(event) { emit(event.muons == event.muons) }", &schema);
    compile_err("def f(event) { emit(1 is 2) }", &schema);
}

#[test]
fn isinstance_on_objects_is_constant() {
    let p = plan("def f(event) { emit(isinstance(event, Record)); emit(isinstance(event.muons, \"Record\")) }", &event_schema(), CompileOptions::default());
    let text = explain(&p);
    assert!(text.contains("emit True") && text.contains("emit False"), "{text}");
    let e = compile_err("def f(event) {\n  t = 1\n  emit(isinstance(event, t))\n}", &event_schema());
    assert_eq!(e.pos.line, 3);
    compile_err("def f(event) { emit(isinstance(event, Record + 1)) }", &event_schema());
}

#[test]
fn recursion_is_rejected() {
    let e = compile_err("def f(event) { emit(g(3)) }\ndef g(n) {\n  return g(n - 1)\n}", &event_schema());
    assert_eq!(e.pos.line, 3);
    assert!(e.message.contains("recursive"), "{e}");
    compile_err("def f(event) { emit(a(1)) }\ndef a(n) { return b(n) }\ndef b(n) { return a(n) }", &event_schema());
}

#[test]
fn zero_lookups_remove_reads() {
    let raw = plan(MAX_PT, &event_schema(), CompileOptions::default().without_optimizations());
    let opt = plan(MAX_PT, &event_schema(), CompileOptions { flatten_loops: false, ..CompileOptions::default() });
    assert!(count_reads(&opt) < count_reads(&raw));
    assert!(explain(&raw).contains("events-Lo[0]"));
    assert!(!explain(&opt).contains("events-Lo[0]"));
    // symbolic indices are left alone
    assert!(explain(&opt).contains("events-Ld-R_muons-Lo[s"));
}

#[test]
fn flattening_nested_lists() {
    let schema = Schema::record([("groups", Schema::list(Schema::list(Schema::float64())))]);
    let src = "def f(event) { for inner in event.groups { for x in inner { emit(x) } } }";
    let flat = plan(src, &schema, CompileOptions::default());
    let nested = plan(src, &schema, CompileOptions { flatten_loops: false, ..CompileOptions::default() });
    let loops = |p: &Plan| p.loop_count();
    assert_eq!(loops(&nested), 3);
    assert_eq!(loops(&flat), 1, "{}", explain(&flat));

    let groups = |gs: Vec<Vec<f64>>| Value::record([("groups", Value::List(gs.into_iter().map(Value::floats).collect()))]);
    let s = store(&schema, vec![groups(vec![vec![1.0, 2.0], vec![], vec![3.0]]), groups(vec![]), groups(vec![vec![4.0]])]);
    let a = run(src, &schema, &s, CompileOptions::default()).unwrap();
    let b = run(src, &schema, &s, CompileOptions { flatten_loops: false, ..CompileOptions::default() }).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, floats(&[1.0, 2.0, 3.0, 4.0]));
}

#[test]
fn triangular_loops_are_not_flattened() {
    let src = "def f(event) {
        n = len(event.muons)
        for i in range(n) { for j in range(i + 1, n) { emit(event.muons[i].pt + event.muons[j].pt) } }
    }";
    let p = plan(src, &event_schema(), CompileOptions::default());
    let loops = p.loop_count();
    assert_eq!(loops, 3);
    assert_eq!(run(src, &event_schema(), &desk(), CompileOptions::default()).unwrap(), floats(&[3.0]));
}

#[test]
fn tuples_unpack() {
    let src = "def f(event) {
        best = (0, 0.0)
        for i in range(len(event.muons)) {
            if event.muons[i].pt > best[1] { best = (i, event.muons[i].pt) }
        }
        i, pt = best
        emit(i)
        emit(pt)
        a, b = (event.muons, 2)
        emit(len(a) + b)
    }";
    let out = run(src, &event_schema(), &desk(), CompileOptions::default()).unwrap();
    assert_eq!(out, vec![Scalar::Int(1), Scalar::Float(2.0), Scalar::Int(4), Scalar::Int(0), Scalar::Float(0.0), Scalar::Int(2)]);
    compile_err("def f(event) { emit((1, 2)) }", &event_schema());
    compile_err("def f(event) { a, b = (1, 2, 3) }", &event_schema());
}

#[test]
fn variables_keep_one_kind() {
    compile_err("def f(event) { x = 1; x = event.muons }", &event_schema());
    compile_err("def f(event) { if len(event.muons) > 0 { x = 1 }; emit(x) }", &event_schema());
    compile_err("def f(event) { if len(event.muons) > 0 { x = 1 } else { x = event }; emit(x) }", &event_schema());
    // rebinding after both paths disagree is fine
    let src = "def f(event) { if len(event.muons) > 0 { x = 1 } else { x = event }; x = 2.5; emit(x) }";
    assert_eq!(run(src, &event_schema(), &desk(), CompileOptions::default()).unwrap(), floats(&[2.5, 2.5]));
}

#[test]
fn functions_returning_objects() {
    let src = "def f(event) { if len(event.muons) > 0 { emit(lead(event.muons).pt) } }
    def lead(ms) {
        best = ms[0]
        for m in ms { if m.pt > best.pt { best = m } }
        return best
    }";
    assert_eq!(run(src, &event_schema(), &desk(), CompileOptions::default()).unwrap(), floats(&[2.0]));
    compile_err("def f(event) { emit(g(event).pt) }\ndef g(e) { for m in e.muons { return m } }", &event_schema());
}

#[test]
fn return_in_entry_skips_to_next_event() {
    let src = "def f(event) { for m in event.muons { if m.pt > 1.5 { return }; emit(m.pt) }; emit(-1.0) }";
    assert_eq!(run(src, &event_schema(), &desk(), CompileOptions::default()).unwrap(), floats(&[1.0, -1.0]));
}

fn hit_schema() -> Schema {
    Schema::record([(
        "hits",
        Schema::list(Schema::named_union([
            ("Energy", Schema::float64()),
            ("Track", Schema::record([("pt", Schema::float64()), ("q", Schema::int64())])),
            ("Cluster", Schema::list(Schema::float64())),
        ])),
    )])
}

fn hit_store() -> ColumnStore {
    let track = |pt: f64, q: i64| Value::Union(1, Box::new(Value::record([("pt", Value::Float(pt)), ("q", Value::Int(q))])));
    let energy = |e: f64| Value::Union(0, Box::new(Value::Float(e)));
    let cluster = |xs: Vec<f64>| Value::Union(2, Box::new(Value::floats(xs)));
    let ev = |hits: Vec<Value>| Value::record([("hits", Value::List(hits))]);
    store(
        &hit_schema(),
        vec![
            ev(vec![energy(1.5), track(3.0, -1), cluster(vec![0.25, 0.5]), track(4.0, 1)]),
            ev(vec![]),
            ev(vec![cluster(vec![]), energy(2.0)]),
        ],
    )
}

#[test]
fn isinstance_on_a_union_reads_the_tag() {
    let p = plan("def f(event) { for i in range(len(event.hits)) { emit(isinstance(event.hits[i], Track)) } }", &hit_schema(), CompileOptions::default());
    let text = explain(&p);
    assert!(text.contains("-Ut[") && text.contains("in {1}"), "{text}");
}

#[test]
fn unions_agree_with_the_interpreter() {
    let schema = hit_schema();
    let s = hit_store();
    let programs = [
        "def f(event) { for h in event.hits { if isinstance(h, Track) { emit(h.pt * h.q) } } }",
        "def f(event) { for h in event.hits { if isinstance(h, float) { emit(h) } elif isinstance(h, \"Cluster\") { emit(len(h)) } else { emit(h.q) } } }",
        "def f(event) { for h in event.hits { if isinstance(h, (Track, Cluster)) { emit(1) } else { emit(h + 1) } } }",
        "def f(event) { for h in event.hits { if isinstance(h, List) { for x in h { emit(x) } } } }",
        "def f(event) { for i in range(len(event.hits)) { h = event.hits[i]; if isinstance(h, Track) and h.pt > 3.5 { emit(i) } } }",
        "def f(event) { for h in event.hits { if not isinstance(h, Track) { emit(0) } else { emit(h.pt) } } }",
        "def f(event) { n = 0; for h in event.hits { if isinstance(h, Energy) { n = n + 1 } }; emit(n) }",
        "def f(event) { for h in event.hits { emit(isinstance(h, Record) or isinstance(h, List)) } }",
        "def f(event) { for h in event.hits { emit(size(h)) } }\ndef size(x) { if isinstance(x, Record) { return x.pt } elif isinstance(x, List) { return len(x) }; return x }",
    ];
    for src in programs {
        let a = run(src, &schema, &s, CompileOptions::default()).unwrap_or_else(|e| panic!("{src}: {e}"));
        let b = run(src, &schema, &s, CompileOptions::unchecked().without_optimizations()).unwrap();
        assert_eq!(a, b, "{src}");
    }
}

#[test]
fn unguarded_union_access_is_an_error() {
    let e = compile_err("def f(event) { for h in event.hits { emit(h.pt) } }", &hit_schema());
    assert!(e.message.contains("attribute"), "{e}");
}

#[test]
fn guards_never_add_branches() {
    let src = "def f(event) { for h in event.hits { if isinstance(h, Track) { emit(h.pt) } } }";
    let p = plan(src, &hit_schema(), CompileOptions::default());
    assert!(!p.guards.is_empty());
    for g in &p.guards {
        assert!(g.after <= g.before, "{g:?}");
    }
}

#[test]
fn nested_unions_are_rejected() {
    let schema = Schema::record([("u", Schema::union([Schema::float64(), Schema::union([Schema::int64(), Schema::bool()])]))]);
    compile_err("def f(event) { emit(1) }", &schema);
}

#[test]
fn primitive_nicknames_are_not_types() {
    // once read, a primitive alternative is just a number
    let src = "def f(event) { for h in event.hits { emit(isinstance(h, Energy)) } }";
    let out = run(src, &hit_schema(), &hit_store(), CompileOptions::default()).unwrap();
    assert!(out.iter().all(|v| *v == Scalar::Bool(false)));
}
