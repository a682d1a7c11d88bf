//! Seeded random schemas, values and event stores shared by the
//! integration tests.
#![allow(dead_code)]

use colnest_core::codec::{ColumnStore, Encoder, Value};
use colnest_core::schema::{DType, Schema};
use rand::Rng;

pub struct Limits {
    pub depth: usize,
    pub fields: usize,
    pub alternatives: usize,
    pub list_len: usize,
}

pub const LIMITS: Limits = Limits { depth: 4, fields: 4, alternatives: 3, list_len: 8 };

pub fn random_schema<R: Rng>(rng: &mut R, depth: usize, limits: &Limits) -> Schema {
    let primitive = |rng: &mut R| Schema::Primitive(DType::ALL[rng.gen_range(0..DType::ALL.len())]);
    if depth <= 1 {
        return primitive(rng);
    }
    match rng.gen_range(0..4) {
        0 => primitive(rng),
        1 => Schema::list(random_schema(rng, depth - 1, limits)),
        2 => {
            let n = rng.gen_range(2..=limits.alternatives);
            Schema::union((0..n).map(|_| random_schema(rng, depth - 1, limits)))
        }
        _ => {
            let n = rng.gen_range(1..=limits.fields);
            Schema::record((0..n).map(|i| (format!("f{i}"), random_schema(rng, depth - 1, limits))))
        }
    }
}

/// Floats include NaN payloads, infinities and signed zeros.
pub fn random_float<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..8) {
        0 => f64::from_bits(rng.gen()),
        1 => [0.0, -0.0, f64::INFINITY, f64::NEG_INFINITY, f64::NAN][rng.gen_range(0..5)],
        _ => rng.gen_range(-1e3..1e3),
    }
}

pub fn random_value<R: Rng>(rng: &mut R, schema: &Schema, limits: &Limits) -> Value {
    match schema {
        Schema::Primitive(DType::Bool) => Value::Bool(rng.gen()),
        Schema::Primitive(DType::Int64) => Value::Int(if rng.gen_bool(0.2) { rng.gen() } else { rng.gen_range(-100..100) }),
        Schema::Primitive(DType::UInt8) => Value::Byte(rng.gen()),
        Schema::Primitive(DType::Float64) => Value::Float(random_float(rng)),
        Schema::List(item) => {
            let n = rng.gen_range(0..=limits.list_len);
            Value::List((0..n).map(|_| random_value(rng, item, limits)).collect())
        }
        Schema::Union(alts) => {
            let t = rng.gen_range(0..alts.len());
            Value::Union(t as u8, Box::new(random_value(rng, &alts[t].schema, limits)))
        }
        Schema::Record(fields) => {
            Value::Record(fields.iter().map(|(k, s)| (k.clone(), random_value(rng, s, limits))).collect())
        }
    }
}

/// Stores `events` as one list under the prefix "events".
pub fn event_store(event_schema: &Schema, events: Vec<Value>) -> ColumnStore {
    let mut store = ColumnStore::new();
    Encoder::new(&mut store, &Schema::list(event_schema.clone()), "events")
        .and_then(|mut e| e.push(&Value::List(events)))
        .expect("events encode");
    store
}

pub fn muon(pt: f64, eta: f64, phi: f64) -> Value {
    Value::record([("pt", Value::Float(pt)), ("eta", Value::Float(eta)), ("phi", Value::Float(phi))])
}

pub fn event(muons: Vec<Value>) -> Value {
    Value::record([("muons", Value::List(muons))])
}
