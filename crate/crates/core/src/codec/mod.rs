//! Lossless mapping between object trees and named flat arrays.
//!
//! Encoding walks a [`Value`] against its [`Schema`] and appends to the
//! columns named by the schema: primitives append their value, lists append
//! a running end offset (the offset column starts at `0`), unions append
//! a tag plus a per-alternative position, and records only route to their
//! fields. Decoding runs the same walk in reverse with one cursor per column.

mod access;
mod decode;
mod encode;
mod store;
mod validate;
mod value;

pub use access::{random_access, random_access_at, union_offsets, PathStep};
pub use decode::{decode, decode_all, DecodeCursor};
pub use encode::{encode, Encoder};
pub use store::{Column, ColumnData, ColumnId, ColumnStore};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};
pub use value::Value;

use thiserror::Error;

use crate::schema::{ColumnName, DType, Schema, SchemaError, Segment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("value does not match schema at {path}: expected {expected}, found {found}")]
    TypeMismatch { path: String, expected: String, found: String },
    #[error("malformed arrays: {0}")]
    Malformed(String),
    #[error("union tag {tag} out of range for {alternatives} alternatives")]
    TagOutOfRange { tag: u8, alternatives: usize },
    #[error("index out of range: {0}")]
    Range(String),
    #[error("path does not match schema: {0}")]
    Path(String),
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("{0}")]
    PrefixConflict(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// A schema resolved against the columns of one store.
#[derive(Debug, Clone)]
pub(crate) enum Layout {
    Primitive(ColumnId),
    List {
        offsets: ColumnId,
        item: Box<Layout>,
    },
    Union {
        tags: ColumnId,
        offsets: Option<ColumnId>,
        alts: Vec<Layout>,
    },
    Record(Vec<(String, Layout)>),
}

impl Layout {
    pub(crate) fn build(
        store: &ColumnStore,
        schema: &Schema,
        name: &ColumnName,
    ) -> Result<Layout, CodecError> {
        let lookup = |name: ColumnName, want: DType| -> Result<ColumnId, CodecError> {
            let rendered = name.render();
            let id = store.id(&rendered).ok_or_else(|| CodecError::MissingColumn(rendered.clone()))?;
            let have = store.column_by_id(id).dtype();
            if have != want {
                return Err(CodecError::Malformed(format!(
                    "column {rendered} has dtype {have}, expected {want}"
                )));
            }
            Ok(id)
        };
        Ok(match schema {
            Schema::Primitive(d) => Layout::Primitive(lookup(name.clone(), *d)?),
            Schema::List(item) => Layout::List {
                offsets: lookup(name.child(Segment::ListOffset), DType::Int64)?,
                item: Box::new(Layout::build(store, item, &name.child(Segment::ListData))?),
            },
            Schema::Union(alts) => {
                let uo = name.child(Segment::UnionOffset);
                let offsets = match store.id(&uo.render()) {
                    Some(_) => Some(lookup(uo, DType::Int64)?),
                    None => None,
                };
                Layout::Union {
                    tags: lookup(name.child(Segment::UnionTag), DType::UInt8)?,
                    offsets,
                    alts: alts
                        .iter()
                        .enumerate()
                        .map(|(t, a)| {
                            Layout::build(store, &a.schema, &name.child(Segment::UnionData(t as u8)))
                        })
                        .collect::<Result<_, _>>()?,
                }
            }
            Schema::Record(fields) => Layout::Record(
                fields
                    .iter()
                    .map(|(f, ty)| {
                        Ok((f.clone(), Layout::build(store, ty, &name.child(Segment::Field(f.clone())))?))
                    })
                    .collect::<Result<_, CodecError>>()?,
            ),
        })
    }

    /// Number of complete items stored under this layout.
    pub(crate) fn item_count(&self, store: &ColumnStore) -> usize {
        match self {
            Layout::Primitive(id) => store.column_by_id(*id).len(),
            Layout::List { offsets, .. } => store.column_by_id(*offsets).len().saturating_sub(1),
            Layout::Union { tags, .. } => store.column_by_id(*tags).len(),
            Layout::Record(fields) => fields.first().map_or(0, |(_, l)| l.item_count(store)),
        }
    }

    pub(crate) fn columns(&self, out: &mut Vec<ColumnId>) {
        match self {
            Layout::Primitive(id) => out.push(*id),
            Layout::List { offsets, item } => {
                out.push(*offsets);
                item.columns(out);
            }
            Layout::Union { tags, offsets, alts } => {
                out.push(*tags);
                out.extend(offsets);
                alts.iter().for_each(|a| a.columns(out));
            }
            Layout::Record(fields) => fields.iter().for_each(|(_, l)| l.columns(out)),
        }
    }
}
