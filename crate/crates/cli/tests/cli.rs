use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const QUERIES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/queries");

fn colnest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colnest")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = colnest(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn encode_decode_validate() {
    let dir = tempfile::tempdir().unwrap();
    let values = dir.path().join("x.json");
    fs::write(&values, "[[1.1, 2.2], [], [3.3]]").unwrap();
    let store = dir.path().join("store");
    ok(&["encode", path(&values), "List<float64>", path(&store), "--prefix", "x"]);
    assert_eq!(ok(&["decode", path(&store), "--prefix", "x", "--path", "0.1"]).trim(), "2.2");
    let all: serde_json::Value = serde_json::from_str(&ok(&["decode", path(&store), "--prefix", "x"])).unwrap();
    assert_eq!(all, serde_json::json!([[1.1, 2.2], [], [3.3]]));
    assert_eq!(ok(&["validate", path(&store)]).trim(), "x: OK");
    assert!(!colnest(&["decode", path(&store), "--prefix", "x", "--path", "1.0"]).status.success());
}

#[test]
fn unions_go_through_the_tagged_wrapper() {
    let dir = tempfile::tempdir().unwrap();
    let values = dir.path().join("hits.json");
    fs::write(&values, r#"[{"tag": "E", "value": 1.5}, {"tag": 1, "value": {"q": 2}}, {"tag": "E", "value": "nan"}]"#).unwrap();
    let store = dir.path().join("store");
    ok(&["encode", path(&values), "Union<E: float64, T: Record{q: int64}>", path(&store)]);
    assert_eq!(ok(&["decode", path(&store), "--path", "1.~.q"]).trim(), "2");
    let back: serde_json::Value = serde_json::from_str(&ok(&["decode", path(&store)])).unwrap();
    assert_eq!(back[2], serde_json::json!({"tag": 0, "value": "nan"}));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"[{"tag": 5, "value": 1}]"#).unwrap();
    let out = colnest(&["encode", path(&bad), "Union<float64, bool>", path(&store)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("$[0]"));
}

#[test]
fn generate_run_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("ev");
    ok(&["generate", "--events", "500", "--seed", "4", path(&store)]);
    assert_eq!(ok(&["validate", path(&store)]).trim(), "events: OK");

    let query = format!("{QUERIES}/max-pt.pq");
    let columnar = ok(&["run", &query, path(&store)]);
    assert_eq!(columnar.lines().count(), 500);
    assert_eq!(ok(&["run", &query, path(&store), "--engine", "materialized"]), columnar);
    assert_eq!(ok(&["run", &query, path(&store), "--no-range-checks", "--no-optimize"]), columnar);
    assert_eq!(ok(&["run", &query, path(&store), "--threads", "3"]), columnar);

    let bench = ok(&["bench", "--query", "pt-sum-of-pairs", "--engine", "columnar-unchecked", path(&store), "--repeats", "1"]);
    assert!(bench.contains("rate"), "{bench}");
    assert!(bench.contains("events-Ld-R_muons-Ld-R_pt"), "{bench}");
    assert!(!colnest(&["bench", "--query", "nope", path(&store)]).status.success());
}

#[test]
fn explain_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let schema = "Record{muons: List<Record{pt: float64, eta: float64, phi: float64}>}";
    let plan = ok(&["explain", &format!("{QUERIES}/mass-of-pairs.pq"), schema]);
    assert!(plan.starts_with("plan mass_of_pairs over events"), "{plan}");
    assert!(plan.contains("cosh"), "{plan}");

    let bad = dir.path().join("bad.pq");
    fs::write(&bad, "def f(event) {\n  emit(event.muons)\n}\n").unwrap();
    let out = colnest(&["explain", path(&bad), schema]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2:"), "{}", String::from_utf8_lossy(&out.stderr));

    // A corrupted offset makes a checked run fail without output.
    let store = dir.path().join("ev");
    ok(&["generate", "--events", "20", "--seed", "1", path(&store)]);
    let manifest = fs::read_to_string(store.join("manifest.txt")).unwrap();
    let line = manifest.lines().find(|l| l.starts_with("column=events-Ld-R_muons-Lo ")).unwrap();
    let file = store.join(line.split_whitespace().last().unwrap());
    let mut bytes = fs::read(&file).unwrap();
    bytes[8..16].copy_from_slice(&10_000i64.to_le_bytes());
    fs::write(&file, bytes).unwrap();
    assert!(!colnest(&["validate", path(&store)]).status.success());
    let out = colnest(&["run", &format!("{QUERIES}/max-pt.pq"), path(&store)]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("range error"));
}
