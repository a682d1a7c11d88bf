use std::collections::BTreeMap;
use std::fmt;

use crate::schema::{DType, Schema};

use super::CodecError;

/// A generic object tree: what gets encoded into columns and what the
/// materializing decoder produces.
#[derive(Debug, Clone)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Byte(u8),
    List(Vec<Value>),
    Union(u8, Box<Value>),
    Record(BTreeMap<String, Value>),
}

/// Floats compare by bit pattern, so `NaN == NaN` and `0.0 != -0.0`.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Byte(a), Value::Byte(b)) => a == b,
            (Value::List(a), Value::List(b)) => a == b,
            (Value::Union(t, a), Value::Union(u, b)) => t == u && a == b,
            (Value::Record(a), Value::Record(b)) => a == b,
            _ => false,
        }
    }
}

impl Value {
    pub fn record<I, S>(fields: I) -> Value
    where
        I: IntoIterator<Item = (S, Value)>,
        S: Into<String>,
    {
        Value::Record(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn floats<I: IntoIterator<Item = f64>>(xs: I) -> Value {
        Value::List(xs.into_iter().map(Value::Float).collect())
    }

    /// Checks that the value has the shape of `schema`.
    pub fn conforms(&self, schema: &Schema) -> Result<(), CodecError> {
        self.conforms_at(schema, &mut String::from("$"))
    }

    fn conforms_at(&self, schema: &Schema, path: &mut String) -> Result<(), CodecError> {
        let mismatch = |path: &str| CodecError::TypeMismatch {
            path: path.to_string(),
            expected: schema.to_string(),
            found: self.kind().to_string(),
        };
        match (schema, self) {
            (Schema::Primitive(DType::Bool), Value::Bool(_))
            | (Schema::Primitive(DType::Int64), Value::Int(_))
            | (Schema::Primitive(DType::Float64), Value::Float(_))
            | (Schema::Primitive(DType::UInt8), Value::Byte(_)) => Ok(()),
            (Schema::List(item), Value::List(items)) => {
                for (i, v) in items.iter().enumerate() {
                    let len = path.len();
                    path.push_str(&format!("[{i}]"));
                    v.conforms_at(item, path)?;
                    path.truncate(len);
                }
                Ok(())
            }
            (Schema::Union(alts), Value::Union(tag, payload)) => {
                let alt = alts.get(*tag as usize).ok_or(CodecError::TagOutOfRange {
                    tag: *tag,
                    alternatives: alts.len(),
                })?;
                let len = path.len();
                path.push_str(&format!("<{tag}>"));
                payload.conforms_at(&alt.schema, path)?;
                path.truncate(len);
                Ok(())
            }
            (Schema::Record(fields), Value::Record(values)) => {
                if let Some(extra) = values.keys().find(|k| !fields.contains_key(*k)) {
                    return Err(CodecError::TypeMismatch {
                        path: format!("{path}.{extra}"),
                        expected: "no such field".into(),
                        found: "value".into(),
                    });
                }
                for (name, ty) in fields {
                    let len = path.len();
                    path.push('.');
                    path.push_str(name);
                    let v = values.get(name).ok_or_else(|| CodecError::TypeMismatch {
                        path: path.clone(),
                        expected: ty.to_string(),
                        found: "missing field".into(),
                    })?;
                    v.conforms_at(ty, path)?;
                    path.truncate(len);
                }
                Ok(())
            }
            _ => Err(mismatch(path)),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int64",
            Value::Float(_) => "float64",
            Value::Byte(_) => "uint8",
            Value::List(_) => "list",
            Value::Union(..) => "union",
            Value::Record(_) => "record",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Byte(b) => write!(f, "{b}u8"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Union(t, v) => write!(f, "U{t}({v})"),
            Value::Record(fields) => {
                f.write_str("{")?;
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}
