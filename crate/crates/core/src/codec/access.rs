use std::fmt;

use crate::schema::{ColumnName, Schema, Segment};

use super::{decode, CodecError, ColumnStore, DecodeCursor, Layout, Value};

/// Dense-union offsets: for each position, how many earlier positions carry
/// the same tag.
pub fn union_offsets(tags: &[u8], n_alternatives: usize) -> Result<Vec<i64>, CodecError> {
    let mut counters = vec![0i64; n_alternatives];
    tags.iter()
        .map(|&t| {
            let c = counters.get_mut(t as usize).ok_or(CodecError::TagOutOfRange {
                tag: t,
                alternatives: n_alternatives,
            })?;
            let out = *c;
            *c += 1;
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathStep {
    Index(i64),
    Field(String),
    /// Step from a union into whichever alternative is stored there.
    Resolve,
}

impl fmt::Display for PathStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathStep::Index(i) => write!(f, "{i}"),
            PathStep::Field(name) => f.write_str(name),
            PathStep::Resolve => f.write_str("~"),
        }
    }
}

/// Reads the object at `path` inside the first stored value without
/// decoding anything else.
pub fn random_access(
    store: &ColumnStore,
    schema: &Schema,
    prefix: &str,
    path: &[PathStep],
) -> Result<Value, CodecError> {
    random_access_at(store, schema, prefix, 0, path)
}

/// Like [`random_access`], starting from top-level item `item`.
pub fn random_access_at(
    store: &ColumnStore,
    schema: &Schema,
    prefix: &str,
    item: usize,
    path: &[PathStep],
) -> Result<Value, CodecError> {
    let root = Layout::build(store, schema, &ColumnName::new(prefix))?;
    let count = root.item_count(store);
    if item >= count {
        return Err(CodecError::Range(format!("item {item} of {count} stored values")));
    }
    let mut node = schema;
    let mut name = ColumnName::new(prefix);
    let mut index = item;
    for step in path {
        match (step, node) {
            (PathStep::Index(k), Schema::List(inner)) => {
                let offsets = col(store, &name.child(Segment::ListOffset))?;
                let start = store.read_i64(offsets, index)?;
                let end = store.read_i64(offsets, index + 1)?;
                let len = end - start;
                if *k < 0 || *k >= len {
                    return Err(CodecError::Range(format!("index {k} into a list of length {len}")));
                }
                index = usize::try_from(start + k)
                    .map_err(|_| CodecError::Malformed(format!("negative offset {start}")))?;
                name = name.child(Segment::ListData);
                node = inner;
            }
            (PathStep::Field(f), Schema::Record(fields)) => {
                node = fields
                    .get(f)
                    .ok_or_else(|| CodecError::Path(format!("record has no field {f:?}")))?;
                name = name.child(Segment::Field(f.clone()));
            }
            (PathStep::Resolve, Schema::Union(alts)) => {
                let tags = col(store, &name.child(Segment::UnionTag))?;
                let offsets = col(store, &name.child(Segment::UnionOffset))?;
                let tag = store.read_u8(tags, index)?;
                let alt = alts.get(tag as usize).ok_or(CodecError::TagOutOfRange {
                    tag,
                    alternatives: alts.len(),
                })?;
                let o = store.read_i64(offsets, index)?;
                index = usize::try_from(o).map_err(|_| CodecError::Malformed(format!("negative union offset {o}")))?;
                name = name.child(Segment::UnionData(tag));
                node = &alt.schema;
            }
            (step, node) => {
                return Err(CodecError::Path(format!("cannot apply step {step} to {node}")));
            }
        }
    }
    let layout = Layout::build(store, node, &name)?;
    let mut cursor = DecodeCursor::for_layout(store, layout, index)?;
    decode(store, &mut cursor)
}

fn col(store: &ColumnStore, name: &ColumnName) -> Result<super::ColumnId, CodecError> {
    let rendered = name.render();
    store.id(&rendered).ok_or(CodecError::MissingColumn(rendered))
}

impl Value {
    /// Follows `path` through an already materialized value.
    pub fn navigate(&self, path: &[PathStep]) -> Result<&Value, CodecError> {
        let mut v = self;
        for step in path {
            v = match (step, v) {
                (PathStep::Index(k), Value::List(items)) => usize::try_from(*k)
                    .ok()
                    .and_then(|k| items.get(k))
                    .ok_or_else(|| CodecError::Range(format!("index {k} into a list of length {}", items.len())))?,
                (PathStep::Field(f), Value::Record(fields)) => fields
                    .get(f)
                    .ok_or_else(|| CodecError::Path(format!("record has no field {f:?}")))?,
                (PathStep::Resolve, Value::Union(_, payload)) => payload,
                (step, v) => return Err(CodecError::Path(format!("cannot apply step {step} to a {}", v.kind()))),
            };
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode;

    #[test]
    fn union_offsets_examples() {
        assert_eq!(union_offsets(&[0, 1, 0, 0, 1], 2).unwrap(), vec![0, 0, 1, 2, 1]);
        assert_eq!(union_offsets(&[], 3).unwrap(), Vec::<i64>::new());
        assert_eq!(union_offsets(&[2, 2, 2], 3).unwrap(), vec![0, 1, 2]);
        assert!(matches!(
            union_offsets(&[0, 3], 3),
            Err(CodecError::TagOutOfRange { tag: 3, alternatives: 3 })
        ));
    }

    fn fixture() -> (ColumnStore, Schema) {
        let schema = Schema::list(Schema::list(Schema::float64()));
        let v = Value::List(vec![Value::floats([1.1, 2.2]), Value::floats([]), Value::floats([3.3])]);
        let mut store = ColumnStore::new();
        encode(&v, &schema, "x", &mut store).unwrap();
        (store, schema)
    }

    #[test]
    fn nested_index_lookup() {
        let (store, schema) = fixture();
        let at = |i, j| random_access(&store, &schema, "x", &[PathStep::Index(i), PathStep::Index(j)]);
        assert_eq!(at(0, 1).unwrap(), Value::Float(2.2));
        assert_eq!(at(2, 0).unwrap(), Value::Float(3.3));
        assert!(matches!(at(1, 0), Err(CodecError::Range(_))));
        assert!(matches!(at(3, 0), Err(CodecError::Range(_))));
    }

    #[test]
    fn whole_subtrees_and_kind_errors() {
        let (store, schema) = fixture();
        assert_eq!(
            random_access(&store, &schema, "x", &[PathStep::Index(0)]).unwrap(),
            Value::floats([1.1, 2.2])
        );
        let err = random_access(&store, &schema, "x", &[PathStep::Field("pt".into())]).unwrap_err();
        assert!(matches!(err, CodecError::Path(_)));
    }

    #[test]
    fn resolve_union_alternatives() {
        let schema = Schema::list(Schema::union([
            Schema::float64(),
            Schema::record([("pt", Schema::float64())]),
        ]));
        let v = Value::List(vec![
            Value::Union(1, Box::new(Value::record([("pt", Value::Float(5.0))]))),
            Value::Union(0, Box::new(Value::Float(-1.0))),
            Value::Union(1, Box::new(Value::record([("pt", Value::Float(7.0))]))),
        ]);
        let mut store = ColumnStore::new();
        encode(&v, &schema, "p", &mut store).unwrap();
        let path = [PathStep::Index(2), PathStep::Resolve, PathStep::Field("pt".into())];
        assert_eq!(random_access(&store, &schema, "p", &path).unwrap(), Value::Float(7.0));
        assert_eq!(v.navigate(&path).unwrap(), &Value::Float(7.0));
    }
}
