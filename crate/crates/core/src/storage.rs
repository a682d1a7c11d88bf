//! On-disk stores: a directory holding `manifest.txt` and one raw
//! little-endian file per column.
//!
//! ```text
//! format=colnest-1
//! prefix.events=List<Record{muons: List<Record{pt: float64}>}>
//! count.events=1000
//! column=events-Lo int64 2 c0000.bin
//! ```
//!
//! Union offset columns are not written; they are rebuilt from the tags.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{union_offsets, CodecError, ColumnData, ColumnStore};
use crate::exec::event_count;
use crate::schema::{DType, Schema, DELIMITER};

pub const FORMAT: &str = "colnest-1";
pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("column {column}: {message}")]
    Column { column: String, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnEntry {
    pub name: String,
    pub dtype: DType,
    pub count: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    /// Prefix to schema of the stored value list.
    pub prefixes: BTreeMap<String, Schema>,
    /// Prefix to number of outer list items.
    pub counts: BTreeMap<String, usize>,
    pub columns: Vec<ColumnEntry>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("format={FORMAT}\n");
        for (prefix, schema) in &self.prefixes {
            out += &format!("prefix.{prefix}={schema}\n");
        }
        for (prefix, n) in &self.counts {
            out += &format!("count.{prefix}={n}\n");
        }
        for c in &self.columns {
            out += &format!("column={} {} {} {}\n", c.name, c.dtype, c.count, c.file);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Manifest, StorageError> {
        let mut manifest = Manifest::default();
        let mut format = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |message: String| StorageError::Manifest { line, message };
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, value) = raw.split_once('=').ok_or_else(|| bad(format!("expected key=value, found {raw:?}")))?;
            if key == "format" {
                format = Some(value.to_string());
            } else if let Some(prefix) = key.strip_prefix("prefix.") {
                let schema: Schema = value.parse().map_err(|e| bad(format!("schema: {e}")))?;
                manifest.prefixes.insert(prefix.to_string(), schema);
            } else if let Some(prefix) = key.strip_prefix("count.") {
                let n = value.parse().map_err(|e| bad(format!("count: {e}")))?;
                manifest.counts.insert(prefix.to_string(), n);
            } else if key == "column" {
                let parts: Vec<&str> = value.split_whitespace().collect();
                let [name, dtype, count, file] = parts[..] else {
                    return Err(bad("column needs: name dtype count file".into()));
                };
                if file.contains(['/', '\\']) || file.starts_with('.') {
                    return Err(bad(format!("column file {file:?} must be a plain file name")));
                }
                manifest.columns.push(ColumnEntry {
                    name: name.to_string(),
                    dtype: dtype.parse().map_err(|e| bad(format!("dtype: {e}")))?,
                    count: count.parse().map_err(|e| bad(format!("count: {e}")))?,
                    file: file.to_string(),
                });
            } else {
                return Err(bad(format!("unknown key {key:?}")));
            }
        }
        match format.as_deref() {
            Some(FORMAT) => Ok(manifest),
            Some(other) => Err(StorageError::Manifest { line: 0, message: format!("unsupported format {other:?}") }),
            None => Err(StorageError::Manifest { line: 0, message: "missing format line".into() }),
        }
    }
}

fn is_union_offsets(name: &str) -> bool {
    name.ends_with(&format!("{DELIMITER}Uo"))
}

fn to_bytes(data: &ColumnData) -> Vec<u8> {
    match data {
        ColumnData::Bool(v) => v.iter().map(|&b| b as u8).collect(),
        ColumnData::Int64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        ColumnData::Float64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        ColumnData::UInt8(v) => v.clone(),
    }
}

fn from_bytes(dtype: DType, bytes: &[u8]) -> Result<ColumnData, String> {
    Ok(match dtype {
        DType::Bool => ColumnData::Bool(
            bytes
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(format!("byte {other} is not a bool")),
                })
                .collect::<Result<_, _>>()?,
        ),
        DType::Int64 => ColumnData::Int64(bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect()),
        DType::Float64 => {
            ColumnData::Float64(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        }
        DType::UInt8 => ColumnData::UInt8(bytes.to_vec()),
    })
}

/// Writes every registered prefix of `store` into `dir`, creating it.
pub fn save(store: &ColumnStore, dir: &Path) -> Result<Manifest, StorageError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = Manifest::default();
    for (prefix, schema) in store.prefixes() {
        manifest.prefixes.insert(prefix.to_string(), schema.clone());
        if let Schema::List(_) = schema {
            let n = event_count(store, prefix).map_err(|e| StorageError::Column {
                column: format!("{prefix}{DELIMITER}Lo"),
                message: e.to_string(),
            })?;
            manifest.counts.insert(prefix.to_string(), n);
        }
    }
    for (i, name) in store.names().filter(|n| !is_union_offsets(n)).enumerate() {
        let col = store.column(name).expect("listed column exists");
        let file = format!("c{i:04}.bin");
        let path = dir.join(&file);
        fs::write(&path, to_bytes(col.data())).map_err(io_err(&path))?;
        manifest.columns.push(ColumnEntry { name: name.to_string(), dtype: col.dtype(), count: col.len(), file });
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest.to_text()).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Reads a store written by [`save`]. The contents are not validated.
pub fn load(dir: &Path) -> Result<ColumnStore, StorageError> {
    let path = dir.join(MANIFEST);
    let manifest = Manifest::parse(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
    let mut store = ColumnStore::new();
    for (prefix, schema) in &manifest.prefixes {
        store.register(schema, prefix)?;
    }
    for entry in &manifest.columns {
        let bad = |message: String| StorageError::Column { column: entry.name.clone(), message };
        let registered = store.column(&entry.name).ok_or_else(|| bad("not part of any stored schema".into()))?;
        if registered.dtype() != entry.dtype {
            return Err(bad(format!("manifest says {}, schema needs {}", entry.dtype, registered.dtype())));
        }
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let expected = entry.count.checked_mul(entry.dtype.width());
        if expected != Some(bytes.len()) {
            return Err(bad(format!(
                "{} holds {} bytes, expected {} x {}",
                entry.file,
                bytes.len(),
                entry.count,
                entry.dtype.width()
            )));
        }
        store.insert_column(entry.name.clone(), from_bytes(entry.dtype, &bytes).map_err(bad)?);
    }
    let derived: Vec<String> = store.names().filter(|n| is_union_offsets(n)).map(String::from).collect();
    for name in derived {
        let tags_name = format!("{}Ut", &name[..name.len() - 2]);
        let tags = store.column(&tags_name).and_then(|c| c.data().as_u8()).unwrap_or(&[]);
        let offsets = union_offsets(tags, 256)?;
        store.insert_column(name, ColumnData::Int64(offsets));
    }
    for (prefix, &n) in &manifest.counts {
        match event_count(&store, prefix) {
            Ok(found) if found == n => {}
            Ok(found) => {
                return Err(StorageError::Column {
                    column: format!("{prefix}{DELIMITER}Lo"),
                    message: format!("manifest counts {n} items, offsets give {found}"),
                })
            }
            Err(e) => return Err(StorageError::Column { column: format!("{prefix}{DELIMITER}Lo"), message: e.to_string() }),
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_all, encode, Value};
    use crate::generate::{generate, GeneratorConfig};

    #[test]
    fn round_trip_generated() {
        let dir = tempfile::tempdir().unwrap();
        let store = generate(&GeneratorConfig::new(200, 5));
        let manifest = save(&store, dir.path()).unwrap();
        assert_eq!(manifest.counts["events"], 200);
        let back = load(dir.path()).unwrap();
        assert!(store.same_contents(&back));
        assert_eq!(Manifest::parse(&manifest.to_text()).unwrap(), manifest);
    }

    #[test]
    fn union_offsets_are_rebuilt() {
        let schema: Schema = "List<Union<float64, Record{n: int64}, bool>>".parse().unwrap();
        let value = Value::List(vec![
            Value::Union(0, Box::new(Value::Float(1.5))),
            Value::Union(2, Box::new(Value::Bool(true))),
            Value::Union(1, Box::new(Value::record([("n", Value::Int(4))]))),
            Value::Union(0, Box::new(Value::Float(-0.0))),
        ]);
        let mut store = ColumnStore::new();
        encode(&value, &schema, "x", &mut store).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = save(&store, dir.path()).unwrap();
        assert!(manifest.columns.iter().all(|c| !c.name.ends_with("-Uo")));
        let back = load(dir.path()).unwrap();
        assert!(store.same_contents(&back));
        assert_eq!(decode_all(&back, &schema, "x").unwrap(), vec![value]);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = save(&generate(&GeneratorConfig::new(10, 1)), dir.path()).unwrap();
        let pt = manifest.columns.iter().find(|c| c.name.ends_with("R_pt")).unwrap();
        let path = dir.path().join(&pt.file);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = load(dir.path()).unwrap_err();
        assert!(matches!(err, StorageError::Column { ref column, .. } if column.ends_with("R_pt")), "{err}");
    }

    #[test]
    fn bad_manifests() {
        assert!(Manifest::parse("prefix.x=List<int64>\n").is_err());
        assert!(Manifest::parse("format=colnest-0\n").is_err());
        assert!(Manifest::parse("format=colnest-1\ncolumn=x-Lo int64 1\n").is_err());
        assert!(Manifest::parse("format=colnest-1\ncolumn=x-Lo int64 1 ../etc\n").is_err());
        assert!(Manifest::parse("format=colnest-1\nwhat=1\n").is_err());
    }
}
