//! JSON text for values, read and written against a schema.
//!
//! Records are objects, lists are arrays, primitives are JSON scalars and a
//! union is `{"tag": t, "value": v}`, where `t` is the alternative index or
//! its nickname. Non-finite floats are the strings `"nan"`, `"inf"` and
//! `"-inf"`.

use std::collections::BTreeMap;

use serde_json::{json, Map, Number, Value as Json};
use thiserror::Error;

use crate::codec::Value;
use crate::schema::{DType, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at {path}: {message}")]
pub struct InterchangeError {
    pub path: String,
    pub message: String,
}

fn err(path: &str, message: impl Into<String>) -> InterchangeError {
    InterchangeError { path: path.to_string(), message: message.into() }
}

/// Converts parsed JSON into a value of `schema`.
pub fn from_json(json: &Json, schema: &Schema) -> Result<Value, InterchangeError> {
    read(json, schema, "$")
}

/// Parses a JSON array whose elements are values of `item`.
pub fn parse_items(text: &str, item: &Schema) -> Result<Vec<Value>, InterchangeError> {
    let json: Json = serde_json::from_str(text).map_err(|e| err("$", e.to_string()))?;
    let Json::Array(items) = json else {
        return Err(err("$", "expected an array of values"));
    };
    items.iter().enumerate().map(|(i, j)| read(j, item, &format!("$[{i}]"))).collect()
}

fn read(json: &Json, schema: &Schema, path: &str) -> Result<Value, InterchangeError> {
    let expected = |what: &str| err(path, format!("expected {what}, found {json}"));
    match schema {
        Schema::Primitive(DType::Bool) => json.as_bool().map(Value::Bool).ok_or_else(|| expected("a bool")),
        Schema::Primitive(DType::Int64) => json.as_i64().map(Value::Int).ok_or_else(|| expected("an int64")),
        Schema::Primitive(DType::UInt8) => json
            .as_u64()
            .and_then(|x| u8::try_from(x).ok())
            .map(Value::Byte)
            .ok_or_else(|| expected("an integer in 0..=255")),
        Schema::Primitive(DType::Float64) => match json {
            Json::Number(n) => n.as_f64().map(Value::Float).ok_or_else(|| expected("a float")),
            Json::String(s) => match s.as_str() {
                "nan" => Ok(Value::Float(f64::NAN)),
                "inf" => Ok(Value::Float(f64::INFINITY)),
                "-inf" => Ok(Value::Float(f64::NEG_INFINITY)),
                _ => Err(expected("a float")),
            },
            _ => Err(expected("a float")),
        },
        Schema::List(item) => {
            let items = json.as_array().ok_or_else(|| expected("an array"))?;
            items
                .iter()
                .enumerate()
                .map(|(i, j)| read(j, item, &format!("{path}[{i}]")))
                .collect::<Result<_, _>>()
                .map(Value::List)
        }
        Schema::Record(fields) => {
            let object = json.as_object().ok_or_else(|| expected("an object"))?;
            if let Some(extra) = object.keys().find(|k| !fields.contains_key(*k)) {
                return Err(err(path, format!("unexpected field {extra:?}")));
            }
            let mut out = BTreeMap::new();
            for (name, ty) in fields {
                let j = object.get(name).ok_or_else(|| err(path, format!("missing field {name:?}")))?;
                out.insert(name.clone(), read(j, ty, &format!("{path}.{name}"))?);
            }
            Ok(Value::Record(out))
        }
        Schema::Union(alts) => {
            let object = json.as_object().filter(|o| o.len() == 2).ok_or_else(|| expected("{\"tag\": .., \"value\": ..}"))?;
            let (Some(tag), Some(inner)) = (object.get("tag"), object.get("value")) else {
                return Err(expected("{\"tag\": .., \"value\": ..}"));
            };
            let t = match tag {
                Json::Number(n) => n.as_u64().filter(|&t| (t as usize) < alts.len()),
                Json::String(s) => alts.iter().position(|a| a.nickname.as_deref() == Some(s.as_str())).map(|t| t as u64),
                _ => None,
            }
            .ok_or_else(|| err(path, format!("no alternative {tag} among {}", alts.len())))?;
            let value = read(inner, &alts[t as usize].schema, &format!("{path}.value"))?;
            Ok(Value::Union(t as u8, Box::new(value)))
        }
    }
}

/// Converts a value to JSON; the inverse of [`from_json`].
pub fn to_json(value: &Value) -> Json {
    match value {
        Value::Bool(b) => Json::Bool(*b),
        Value::Int(i) => json!(i),
        Value::Byte(b) => json!(b),
        Value::Float(x) => match Number::from_f64(*x) {
            Some(n) => Json::Number(n),
            None if x.is_nan() => json!("nan"),
            None if *x > 0.0 => json!("inf"),
            None => json!("-inf"),
        },
        Value::List(items) => Json::Array(items.iter().map(to_json).collect()),
        Value::Union(t, v) => json!({"tag": t, "value": to_json(v)}),
        Value::Record(fields) => Json::Object(fields.iter().map(|(k, v)| (k.clone(), to_json(v))).collect::<Map<_, _>>()),
    }
}
