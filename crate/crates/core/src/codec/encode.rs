use crate::schema::{ColumnName, Schema};

use super::{CodecError, ColumnData, ColumnStore, Layout, Value};

/// Appends values of one schema to a store, one after another.
pub struct Encoder<'s> {
    store: &'s mut ColumnStore,
    schema: Schema,
    layout: Layout,
}

impl<'s> Encoder<'s> {
    /// Registers `schema` under `prefix`, creating all of its columns up front
    /// so alternatives and lists that never receive data still exist.
    pub fn new(store: &'s mut ColumnStore, schema: &Schema, prefix: &str) -> Result<Self, CodecError> {
        store.register(schema, prefix)?;
        let layout = Layout::build(store, schema, &ColumnName::new(prefix))?;
        Ok(Encoder { store, schema: schema.clone(), layout })
    }

    pub fn push(&mut self, value: &Value) -> Result<(), CodecError> {
        value.conforms(&self.schema)?;
        append(self.store, &self.layout, value)
    }
}

/// Encodes one value into `store` under `prefix`.
pub fn encode(
    value: &Value,
    schema: &Schema,
    prefix: &str,
    store: &mut ColumnStore,
) -> Result<(), CodecError> {
    Encoder::new(store, schema, prefix)?.push(value)
}

fn append(store: &mut ColumnStore, layout: &Layout, value: &Value) -> Result<(), CodecError> {
    match (layout, value) {
        (Layout::Primitive(id), _) => match (store.data_mut(*id), value) {
            (ColumnData::Bool(v), Value::Bool(x)) => v.push(*x),
            (ColumnData::Int64(v), Value::Int(x)) => v.push(*x),
            (ColumnData::Float64(v), Value::Float(x)) => v.push(*x),
            (ColumnData::UInt8(v), Value::Byte(x)) => v.push(*x),
            (data, _) => return Err(mismatch(data.dtype().name(), value)),
        },
        (Layout::List { offsets, item }, Value::List(items)) => {
            let ColumnData::Int64(off) = store.data_mut(*offsets) else {
                return Err(CodecError::Malformed("list offsets must be int64".into()));
            };
            let last = *off.last().unwrap_or(&0);
            if off.is_empty() {
                off.push(0);
            }
            off.push(last + items.len() as i64);
            for v in items {
                append(store, item, v)?;
            }
        }
        (Layout::Union { tags, offsets, alts }, Value::Union(tag, payload)) => {
            let alt = alts.get(*tag as usize).ok_or(CodecError::TagOutOfRange {
                tag: *tag,
                alternatives: alts.len(),
            })?;
            let position = alt.item_count(store) as i64;
            if let ColumnData::UInt8(t) = store.data_mut(*tags) {
                t.push(*tag);
            }
            if let Some(o) = offsets {
                if let ColumnData::Int64(o) = store.data_mut(*o) {
                    o.push(position);
                }
            }
            append(store, alt, payload)?;
        }
        (Layout::Record(fields), Value::Record(values)) => {
            for (name, field) in fields {
                let v = values
                    .get(name)
                    .ok_or_else(|| mismatch(&format!("record with field {name}"), value))?;
                append(store, field, v)?;
            }
        }
        (_, v) => return Err(mismatch("matching structure", v)),
    }
    Ok(())
}

fn mismatch(expected: &str, found: &Value) -> CodecError {
    CodecError::TypeMismatch {
        path: "$".into(),
        expected: expected.to_string(),
        found: found.kind().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nested() -> Value {
        Value::List(vec![Value::floats([1.1, 2.2]), Value::floats([]), Value::floats([3.3])])
    }

    #[test]
    fn list_of_lists_fixture() {
        let mut store = ColumnStore::new();
        encode(&nested(), &Schema::list(Schema::list(Schema::float64())), "x", &mut store).unwrap();
        assert_eq!(store.column("x-Lo").unwrap().data(), &ColumnData::Int64(vec![0, 3]));
        assert_eq!(store.column("x-Ld-Lo").unwrap().data(), &ColumnData::Int64(vec![0, 2, 2, 3]));
        assert_eq!(
            store.column("x-Ld-Ld").unwrap().data(),
            &ColumnData::Float64(vec![1.1, 2.2, 3.3])
        );
    }

    #[test]
    fn empty_list() {
        let mut store = ColumnStore::new();
        encode(&Value::floats([]), &Schema::list(Schema::float64()), "x", &mut store).unwrap();
        assert_eq!(store.column("x-Lo").unwrap().data(), &ColumnData::Int64(vec![0, 0]));
        assert!(store.column("x-Ld").unwrap().is_empty());
    }

    #[test]
    fn union_sequence() {
        let schema = Schema::union([Schema::float64(), Schema::list(Schema::float64())]);
        let mut store = ColumnStore::new();
        let mut enc = Encoder::new(&mut store, &schema, "x").unwrap();
        for v in [
            Value::Union(0, Box::new(Value::Float(3.0))),
            Value::Union(1, Box::new(Value::floats([1.0]))),
            Value::Union(0, Box::new(Value::Float(4.0))),
        ] {
            enc.push(&v).unwrap();
        }
        assert_eq!(store.column("x-Ut").unwrap().data(), &ColumnData::UInt8(vec![0, 1, 0]));
        assert_eq!(store.column("x-Uo").unwrap().data(), &ColumnData::Int64(vec![0, 0, 1]));
        assert_eq!(store.column("x-Ud0").unwrap().data(), &ColumnData::Float64(vec![3.0, 4.0]));
        assert_eq!(store.column("x-Ud1-Lo").unwrap().data(), &ColumnData::Int64(vec![0, 1]));
        assert_eq!(store.column("x-Ud1-Ld").unwrap().data(), &ColumnData::Float64(vec![1.0]));
    }

    #[test]
    fn mismatched_value_leaves_store_untouched() {
        let mut store = ColumnStore::new();
        let schema = Schema::list(Schema::float64());
        let err = encode(&Value::List(vec![Value::Int(1)]), &schema, "x", &mut store).unwrap_err();
        assert!(matches!(err, CodecError::TypeMismatch { .. }));
        assert_eq!(store.column("x-Lo").unwrap().data(), &ColumnData::Int64(vec![0]));
    }

    #[test]
    fn prefix_reuse_with_other_schema_is_rejected() {
        let mut store = ColumnStore::new();
        encode(&Value::Float(1.0), &Schema::float64(), "x", &mut store).unwrap();
        let err = encode(&Value::Int(1), &Schema::int64(), "x", &mut store).unwrap_err();
        assert!(matches!(err, CodecError::PrefixConflict(_)));
    }

    #[test]
    fn untouched_alternatives_still_get_columns() {
        let schema = Schema::union([Schema::float64(), Schema::record([("a", Schema::list(Schema::int64()))])]);
        let mut store = ColumnStore::new();
        encode(&Value::Union(0, Box::new(Value::Float(1.0))), &schema, "x", &mut store).unwrap();
        assert_eq!(store.column("x-Ud1-R_a-Lo").unwrap().data(), &ColumnData::Int64(vec![0]));
        assert!(store.column("x-Ud1-R_a-Ld").unwrap().is_empty());
    }
}
