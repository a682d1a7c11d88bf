use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::schema::{columns_for, ColumnRole, DType, Schema};

use super::CodecError;

/// Flat storage for one column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Bool(Vec<bool>),
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    UInt8(Vec<u8>),
}

impl ColumnData {
    pub fn empty(dtype: DType) -> ColumnData {
        match dtype {
            DType::Bool => ColumnData::Bool(Vec::new()),
            DType::Int64 => ColumnData::Int64(Vec::new()),
            DType::Float64 => ColumnData::Float64(Vec::new()),
            DType::UInt8 => ColumnData::UInt8(Vec::new()),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            ColumnData::Bool(_) => DType::Bool,
            ColumnData::Int64(_) => DType::Int64,
            ColumnData::Float64(_) => DType::Float64,
            ColumnData::UInt8(_) => DType::UInt8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Bool(v) => v.len(),
            ColumnData::Int64(v) => v.len(),
            ColumnData::Float64(v) => v.len(),
            ColumnData::UInt8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match self {
            ColumnData::Int64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match self {
            ColumnData::UInt8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match self {
            ColumnData::Float64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<&[bool]> {
        match self {
            ColumnData::Bool(v) => Some(v),
            _ => None,
        }
    }

    /// Bitwise equality; floats compare by bit pattern.
    pub fn bit_eq(&self, other: &ColumnData) -> bool {
        match (self, other) {
            (ColumnData::Float64(a), ColumnData::Float64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => self == other,
        }
    }
}

/// A column plus its element-read counter.
#[derive(Debug)]
pub struct Column {
    data: ColumnData,
    reads: AtomicU64,
}

impl Column {
    pub fn new(data: ColumnData) -> Column {
        Column { data, reads: AtomicU64::new(0) }
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn add_reads(&self, n: u64) {
        self.reads.fetch_add(n, Ordering::Relaxed);
    }
}

impl Clone for Column {
    fn clone(&self) -> Self {
        Column { data: self.data.clone(), reads: AtomicU64::new(self.reads()) }
    }
}

/// Index of a column inside a [`ColumnStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnId(pub usize);

/// Named flat arrays, the persisted form of encoded data.
///
/// Each registered prefix owns the columns of one schema. When
/// instrumentation is on, element reads made through the store (and reads
/// reported back by the engines) are counted per column.
#[derive(Debug, Clone, Default)]
pub struct ColumnStore {
    columns: Vec<Column>,
    names: Vec<String>,
    by_name: BTreeMap<String, ColumnId>,
    schemas: BTreeMap<String, Schema>,
    instrumented: bool,
}

impl ColumnStore {
    pub fn new() -> ColumnStore {
        ColumnStore::default()
    }

    pub fn instrumented(mut self, on: bool) -> ColumnStore {
        self.instrumented = on;
        self
    }

    pub fn set_instrumented(&mut self, on: bool) {
        self.instrumented = on;
    }

    pub fn is_instrumented(&self) -> bool {
        self.instrumented
    }

    /// Creates every column of `schema` under `prefix` that does not exist
    /// yet; list-offset columns start as `[0]`.
    ///
    /// Reusing a prefix with a different schema is rejected.
    pub fn register(&mut self, schema: &Schema, prefix: &str) -> Result<(), CodecError> {
        if let Some(existing) = self.schemas.get(prefix) {
            if existing.without_nicknames() != schema.without_nicknames() {
                return Err(CodecError::PrefixConflict(format!(
                    "prefix {prefix:?} already holds {existing}, cannot reuse it for {schema}"
                )));
            }
            return Ok(());
        }
        let cols = columns_for(schema, prefix)?;
        for (name, role) in &cols {
            let rendered = name.render();
            match self.by_name.get(&rendered) {
                Some(id) => {
                    let have = self.columns[id.0].dtype();
                    if have != role.dtype() {
                        return Err(CodecError::Malformed(format!(
                            "column {rendered} has dtype {have}, schema needs {}",
                            role.dtype()
                        )));
                    }
                }
                None => {
                    let data = match role {
                        ColumnRole::ListOffset => ColumnData::Int64(vec![0]),
                        other => ColumnData::empty(other.dtype()),
                    };
                    self.insert_column(rendered, data);
                }
            }
        }
        self.schemas.insert(prefix.to_string(), schema.clone());
        Ok(())
    }

    pub fn schema(&self, prefix: &str) -> Option<&Schema> {
        self.schemas.get(prefix)
    }

    pub fn prefixes(&self) -> impl Iterator<Item = (&str, &Schema)> {
        self.schemas.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Inserts or replaces a column.
    pub fn insert_column(&mut self, name: impl Into<String>, data: ColumnData) -> ColumnId {
        let name = name.into();
        match self.by_name.get(&name) {
            Some(id) => {
                self.columns[id.0] = Column::new(data);
                *id
            }
            None => {
                let id = ColumnId(self.columns.len());
                self.columns.push(Column::new(data));
                self.names.push(name.clone());
                self.by_name.insert(name, id);
                id
            }
        }
    }

    pub fn id(&self, name: &str) -> Option<ColumnId> {
        self.by_name.get(name).copied()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.id(name).map(|id| &self.columns[id.0])
    }

    pub fn column_by_id(&self, id: ColumnId) -> &Column {
        &self.columns[id.0]
    }

    pub fn name_of(&self, id: ColumnId) -> &str {
        &self.names[id.0]
    }

    pub(crate) fn data_mut(&mut self, id: ColumnId) -> &mut ColumnData {
        &mut self.columns[id.0].data
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Column names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    /// Records `n` element reads against a column when instrumented.
    pub fn record_reads(&self, id: ColumnId, n: u64) {
        if self.instrumented && n > 0 {
            self.columns[id.0].add_reads(n);
        }
    }

    /// Per-column read counts, or `None` if the store is not instrumented.
    pub fn read_counts(&self) -> Option<BTreeMap<String, u64>> {
        self.instrumented.then(|| {
            self.by_name
                .iter()
                .map(|(name, id)| (name.clone(), self.columns[id.0].reads()))
                .collect()
        })
    }

    /// Names of the columns with at least one counted read.
    pub fn touched_columns(&self) -> Vec<String> {
        self.by_name
            .iter()
            .filter(|(_, id)| self.columns[id.0].reads() > 0)
            .map(|(name, _)| name.clone())
            .collect()
    }

    pub fn reset_read_counts(&self) {
        for c in &self.columns {
            c.reads.store(0, Ordering::Relaxed);
        }
    }

    pub(crate) fn read_i64(&self, id: ColumnId, index: usize) -> Result<i64, CodecError> {
        let col = &self.columns[id.0];
        let v = col.data.as_i64().ok_or_else(|| self.wrong_type(id, DType::Int64))?;
        let x = v.get(index).copied().ok_or_else(|| self.overrun(id, index))?;
        self.record_reads(id, 1);
        Ok(x)
    }

    pub(crate) fn read_u8(&self, id: ColumnId, index: usize) -> Result<u8, CodecError> {
        let col = &self.columns[id.0];
        let v = col.data.as_u8().ok_or_else(|| self.wrong_type(id, DType::UInt8))?;
        let x = v.get(index).copied().ok_or_else(|| self.overrun(id, index))?;
        self.record_reads(id, 1);
        Ok(x)
    }

    fn wrong_type(&self, id: ColumnId, want: DType) -> CodecError {
        CodecError::Malformed(format!(
            "column {} has dtype {}, expected {want}",
            self.names[id.0],
            self.columns[id.0].dtype()
        ))
    }

    fn overrun(&self, id: ColumnId, index: usize) -> CodecError {
        CodecError::Malformed(format!(
            "index {index} beyond the end of column {} (length {})",
            self.names[id.0],
            self.columns[id.0].len()
        ))
    }

    /// Columns equal bit for bit (read counters ignored).
    pub fn same_contents(&self, other: &ColumnStore) -> bool {
        self.by_name.len() == other.by_name.len()
            && self.by_name.iter().all(|(name, id)| {
                other
                    .column(name)
                    .is_some_and(|c| c.data.bit_eq(&self.columns[id.0].data))
            })
    }
}
