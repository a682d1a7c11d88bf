use std::collections::BTreeMap;

use crate::schema::{ColumnName, Schema};

use super::{CodecError, ColumnData, ColumnId, ColumnStore, Layout, Value};

/// Per-column read positions for sequential decoding.
#[derive(Debug, Clone)]
pub struct DecodeCursor {
    layout: Layout,
    positions: Vec<usize>,
}

impl DecodeCursor {
    /// Cursor at the first stored value of `schema` under `prefix`.
    pub fn new(store: &ColumnStore, schema: &Schema, prefix: &str) -> Result<Self, CodecError> {
        Self::at(store, schema, prefix, 0)
    }

    /// Cursor positioned at top-level item `item`.
    pub fn at(store: &ColumnStore, schema: &Schema, prefix: &str, item: usize) -> Result<Self, CodecError> {
        let layout = Layout::build(store, schema, &ColumnName::new(prefix))?;
        Self::for_layout(store, layout, item)
    }

    pub(crate) fn for_layout(store: &ColumnStore, layout: Layout, item: usize) -> Result<Self, CodecError> {
        let mut cursor = DecodeCursor { layout, positions: vec![0; store.len()] };
        let layout = cursor.layout.clone();
        cursor.seek(store, &layout, item)?;
        Ok(cursor)
    }

    fn seek(&mut self, store: &ColumnStore, layout: &Layout, item: usize) -> Result<(), CodecError> {
        match layout {
            Layout::Primitive(id) => self.positions[id.0] = item,
            Layout::List { offsets, item: inner } => {
                self.positions[offsets.0] = item;
                let start = store.read_i64(*offsets, item)?;
                let start = usize::try_from(start)
                    .map_err(|_| CodecError::Malformed(format!("negative offset {start}")))?;
                self.seek(store, inner, start)?;
            }
            Layout::Union { tags, offsets, alts } => {
                self.positions[tags.0] = item;
                for (t, alt) in alts.iter().enumerate() {
                    let before = count_before(store, *tags, *offsets, alt, t as u8, item)?;
                    self.seek(store, alt, before)?;
                }
            }
            Layout::Record(fields) => {
                for (_, field) in fields {
                    self.seek(store, field, item)?;
                }
            }
        }
        Ok(())
    }

    /// Current position of a column, if the cursor covers it.
    pub fn position(&self, store: &ColumnStore, column: &str) -> Option<usize> {
        let id = store.id(column)?;
        let mut cols = Vec::new();
        self.layout.columns(&mut cols);
        cols.contains(&id).then(|| self.positions[id.0])
    }

    /// Top-level items not yet decoded.
    pub fn remaining(&self, store: &ColumnStore) -> usize {
        let total = self.layout.item_count(store);
        total.saturating_sub(self.root_position())
    }

    fn root_position(&self) -> usize {
        fn first(layout: &Layout, positions: &[usize]) -> usize {
            match layout {
                Layout::Primitive(id) | Layout::List { offsets: id, .. } | Layout::Union { tags: id, .. } => {
                    positions[id.0]
                }
                Layout::Record(fields) => fields.first().map_or(0, |(_, l)| first(l, positions)),
            }
        }
        first(&self.layout, &self.positions)
    }

    /// Checks that every cursor ended exactly at the end of its column.
    pub fn finish(&self, store: &ColumnStore) -> Result<(), CodecError> {
        fn check(layout: &Layout, positions: &[usize], store: &ColumnStore) -> Result<(), CodecError> {
            let at_end = |id: ColumnId, slack: usize| {
                let len = store.column_by_id(id).len();
                if positions[id.0] + slack == len {
                    Ok(())
                } else {
                    Err(CodecError::Malformed(format!(
                        "column {} ends at position {} but has length {len}",
                        store.name_of(id),
                        positions[id.0] + slack
                    )))
                }
            };
            match layout {
                Layout::Primitive(id) => at_end(*id, 0),
                Layout::List { offsets, item } => {
                    at_end(*offsets, 1)?;
                    check(item, positions, store)
                }
                Layout::Union { tags, alts, .. } => {
                    at_end(*tags, 0)?;
                    alts.iter().try_for_each(|a| check(a, positions, store))
                }
                Layout::Record(fields) => fields.iter().try_for_each(|(_, l)| check(l, positions, store)),
            }
        }
        check(&self.layout, &self.positions, store)
    }
}

/// Number of items tagged `tag` before position `item`, using the
/// union-offset column where it can.
fn count_before(
    store: &ColumnStore,
    tags: ColumnId,
    offsets: Option<ColumnId>,
    alt: &Layout,
    tag: u8,
    item: usize,
) -> Result<usize, CodecError> {
    let t = store
        .column_by_id(tags)
        .data()
        .as_u8()
        .ok_or_else(|| CodecError::Malformed("union tags must be uint8".into()))?;
    let item = item.min(t.len());
    if let Some(offsets) = offsets {
        if let Some(j) = t[item..].iter().position(|&x| x == tag) {
            let o = store.read_i64(offsets, item + j)?;
            return usize::try_from(o).map_err(|_| CodecError::Malformed(format!("negative union offset {o}")));
        }
        // no later item carries this tag, so all of them come before
        return Ok(alt.item_count(store));
    }
    Ok(t[..item].iter().filter(|&&x| x == tag).count())
}

/// Decodes the next value and advances the cursor.
pub fn decode(store: &ColumnStore, cursor: &mut DecodeCursor) -> Result<Value, CodecError> {
    let layout = std::mem::replace(&mut cursor.layout, Layout::Record(Vec::new()));
    let out = read(store, &layout, &mut cursor.positions);
    cursor.layout = layout;
    out
}

/// Decodes every stored value of `schema` under `prefix`, then checks that
/// all columns were consumed exactly.
pub fn decode_all(store: &ColumnStore, schema: &Schema, prefix: &str) -> Result<Vec<Value>, CodecError> {
    let mut cursor = DecodeCursor::new(store, schema, prefix)?;
    let n = cursor.layout.item_count(store);
    let values = (0..n).map(|_| decode(store, &mut cursor)).collect::<Result<Vec<_>, _>>()?;
    cursor.finish(store)?;
    Ok(values)
}

fn read(store: &ColumnStore, layout: &Layout, pos: &mut [usize]) -> Result<Value, CodecError> {
    match layout {
        Layout::Primitive(id) => {
            let i = pos[id.0];
            let overrun = || {
                CodecError::Malformed(format!(
                    "index {i} beyond the end of column {} (length {})",
                    store.name_of(*id),
                    store.column_by_id(*id).len()
                ))
            };
            let v = match store.column_by_id(*id).data() {
                ColumnData::Bool(v) => Value::Bool(*v.get(i).ok_or_else(overrun)?),
                ColumnData::Int64(v) => Value::Int(*v.get(i).ok_or_else(overrun)?),
                ColumnData::Float64(v) => Value::Float(*v.get(i).ok_or_else(overrun)?),
                ColumnData::UInt8(v) => Value::Byte(*v.get(i).ok_or_else(overrun)?),
            };
            store.record_reads(*id, 1);
            pos[id.0] = i + 1;
            Ok(v)
        }
        Layout::List { offsets, item } => {
            let i = pos[offsets.0];
            let start = store.read_i64(*offsets, i)?;
            let end = store.read_i64(*offsets, i + 1)?;
            if end < start {
                return Err(CodecError::Malformed(format!(
                    "offsets decrease from {start} to {end} in {}",
                    store.name_of(*offsets)
                )));
            }
            pos[offsets.0] = i + 1;
            let items = (start..end)
                .map(|_| read(store, item, pos))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::List(items))
        }
        Layout::Union { tags, alts, .. } => {
            let i = pos[tags.0];
            let tag = store.read_u8(*tags, i)?;
            let alt = alts.get(tag as usize).ok_or(CodecError::TagOutOfRange {
                tag,
                alternatives: alts.len(),
            })?;
            pos[tags.0] = i + 1;
            Ok(Value::Union(tag, Box::new(read(store, alt, pos)?)))
        }
        Layout::Record(fields) => {
            let mut out = BTreeMap::new();
            for (name, field) in fields {
                out.insert(name.clone(), read(store, field, pos)?);
            }
            Ok(Value::Record(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, Encoder};

    fn nested() -> Value {
        Value::List(vec![Value::floats([1.1, 2.2]), Value::floats([]), Value::floats([3.3])])
    }

    fn nested_schema() -> Schema {
        Schema::list(Schema::list(Schema::float64()))
    }

    #[test]
    fn round_trips_the_fixture() {
        let mut store = ColumnStore::new();
        encode(&nested(), &nested_schema(), "x", &mut store).unwrap();
        assert_eq!(decode_all(&store, &nested_schema(), "x").unwrap(), vec![nested()]);
    }

    #[test]
    fn empty_list_decodes_empty() {
        let mut store = ColumnStore::new();
        let schema = Schema::list(Schema::float64());
        encode(&Value::floats([]), &schema, "x", &mut store).unwrap();
        assert_eq!(decode_all(&store, &schema, "x").unwrap(), vec![Value::floats([])]);
    }

    #[test]
    fn offsets_beyond_data_are_malformed() {
        let mut store = ColumnStore::new();
        store.insert_column("x-Lo", ColumnData::Int64(vec![0, 5]));
        store.insert_column("x-Ld", ColumnData::Float64(vec![1.0, 2.0, 3.0]));
        let err = decode_all(&store, &Schema::list(Schema::float64()), "x").unwrap_err();
        assert!(matches!(err, CodecError::Malformed(_)), "{err}");
    }

    #[test]
    fn leftover_data_is_malformed() {
        let mut store = ColumnStore::new();
        store.insert_column("x-Lo", ColumnData::Int64(vec![0, 2]));
        store.insert_column("x-Ld", ColumnData::Float64(vec![1.0, 2.0, 3.0]));
        let err = decode_all(&store, &Schema::list(Schema::float64()), "x").unwrap_err();
        assert!(err.to_string().contains("x-Ld"), "{err}");
    }

    #[test]
    fn seek_into_a_union_sequence() {
        let schema = Schema::union([Schema::float64(), Schema::list(Schema::int64())]);
        let values: Vec<Value> = (0..7)
            .map(|i| {
                if i % 3 == 1 {
                    Value::Union(1, Box::new(Value::List(vec![Value::Int(i); i as usize])))
                } else {
                    Value::Union(0, Box::new(Value::Float(i as f64)))
                }
            })
            .collect();
        let mut store = ColumnStore::new();
        let mut enc = Encoder::new(&mut store, &schema, "u").unwrap();
        values.iter().for_each(|v| enc.push(v).unwrap());
        for start in 0..values.len() {
            let mut cursor = DecodeCursor::at(&store, &schema, "u", start).unwrap();
            for expected in &values[start..] {
                assert_eq!(&decode(&store, &mut cursor).unwrap(), expected);
            }
            cursor.finish(&store).unwrap();
        }
    }
}
