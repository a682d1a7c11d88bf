use std::collections::BTreeSet;
use std::fmt;

use crate::schema::{columns_for, ColumnName, Schema, Segment, DELIMITER};

use super::{union_offsets, ColumnData, ColumnStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    InvalidSchema,
    MissingColumn,
    WrongDtype,
    UnexpectedColumn,
    FirstOffsetNotZero,
    OffsetsNotMonotone,
    TagOutOfRange,
    LengthMismatch,
    UnionOffsetsInconsistent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub column: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.column, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("OK");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of the columns under `prefix`.
pub fn validate(store: &ColumnStore, schema: &Schema, prefix: &str) -> ValidationReport {
    let mut report = ValidationReport::default();
    let expected = match columns_for(schema, prefix) {
        Ok(cols) => cols,
        Err(e) => {
            report.push(prefix, ViolationKind::InvalidSchema, e.to_string());
            return report;
        }
    };
    let expected_names: BTreeSet<String> = expected.keys().map(ColumnName::render).collect();
    let nested = format!("{prefix}{DELIMITER}");
    for name in store.names() {
        if (name == prefix || name.starts_with(&nested)) && !expected_names.contains(name) {
            report.push(name, ViolationKind::UnexpectedColumn, "not part of the schema".into());
        }
    }
    for (name, role) in &expected {
        let rendered = name.render();
        match store.column(&rendered) {
            None => report.push(&rendered, ViolationKind::MissingColumn, "column is missing".into()),
            Some(c) if c.dtype() != role.dtype() => report.push(
                &rendered,
                ViolationKind::WrongDtype,
                format!("dtype {} but expected {}", c.dtype(), role.dtype()),
            ),
            Some(_) => {}
        }
    }
    if !report.is_ok() {
        return report;
    }
    let root = ColumnName::new(prefix);
    let count = root_count(store, schema, &root);
    let mut checker = Checker { store, report };
    checker.check(schema, &root, count);
    checker.report
}

impl ValidationReport {
    fn push(&mut self, column: &str, kind: ViolationKind, detail: String) {
        self.violations.push(Violation { column: column.to_string(), kind, detail });
    }
}

fn root_count(store: &ColumnStore, schema: &Schema, name: &ColumnName) -> usize {
    let len = |n: ColumnName| store.column(&n.render()).map_or(0, |c| c.len());
    match schema {
        Schema::Primitive(_) => len(name.clone()),
        Schema::List(_) => len(name.child(Segment::ListOffset)).saturating_sub(1),
        Schema::Union(_) => len(name.child(Segment::UnionTag)),
        Schema::Record(fields) => fields
            .iter()
            .next()
            .map_or(0, |(f, ty)| root_count(store, ty, &name.child(Segment::Field(f.clone())))),
    }
}

struct Checker<'a> {
    store: &'a ColumnStore,
    report: ValidationReport,
}

impl<'a> Checker<'a> {
    fn data(&self, name: &ColumnName) -> (String, &'a ColumnData) {
        let rendered = name.render();
        let data = self.store.column(&rendered).expect("presence checked above").data();
        (rendered, data)
    }

    fn length(&mut self, rendered: &str, have: usize, want: usize) -> bool {
        if have != want {
            self.report.push(
                rendered,
                ViolationKind::LengthMismatch,
                format!("length {have} but the enclosing structure implies {want}"),
            );
            return false;
        }
        true
    }

    fn check(&mut self, schema: &Schema, name: &ColumnName, count: usize) {
        match schema {
            Schema::Primitive(_) => {
                let (rendered, data) = self.data(name);
                self.length(&rendered, data.len(), count);
            }
            Schema::List(item) => {
                let lo = name.child(Segment::ListOffset);
                let (rendered, data) = self.data(&lo);
                let offsets = data.as_i64().unwrap_or_default();
                if !self.length(&rendered, offsets.len(), count + 1) && offsets.is_empty() {
                    return;
                }
                if offsets[0] != 0 {
                    self.report.push(
                        &rendered,
                        ViolationKind::FirstOffsetNotZero,
                        format!("first offset ≠ 0 (found {})", offsets[0]),
                    );
                }
                if let Some(i) = offsets.windows(2).position(|w| w[1] < w[0]) {
                    self.report.push(
                        &rendered,
                        ViolationKind::OffsetsNotMonotone,
                        format!("offsets not monotone at position {}: {} then {}", i + 1, offsets[i], offsets[i + 1]),
                    );
                    return;
                }
                let last = *offsets.last().unwrap_or(&0);
                if last < 0 {
                    return;
                }
                self.check(item, &name.child(Segment::ListData), last as usize);
            }
            Schema::Union(alts) => {
                let ut = name.child(Segment::UnionTag);
                let (rendered, data) = self.data(&ut);
                let tags = data.as_u8().unwrap_or_default().to_vec();
                self.length(&rendered, tags.len(), count);
                if let Some(bad) = tags.iter().find(|&&t| t as usize >= alts.len()) {
                    self.report.push(
                        &rendered,
                        ViolationKind::TagOutOfRange,
                        format!("tag {bad} but only {} alternatives", alts.len()),
                    );
                    return;
                }
                let uo = name.child(Segment::UnionOffset);
                let (uo_name, uo_data) = self.data(&uo);
                let expected = union_offsets(&tags, alts.len()).unwrap_or_default();
                if uo_data.as_i64() != Some(expected.as_slice()) {
                    self.report.push(
                        &uo_name,
                        ViolationKind::UnionOffsetsInconsistent,
                        "union offsets do not match the tags".into(),
                    );
                }
                for (t, alt) in alts.iter().enumerate() {
                    let n = tags.iter().filter(|&&x| x as usize == t).count();
                    self.check(&alt.schema, &name.child(Segment::UnionData(t as u8)), n);
                }
            }
            Schema::Record(fields) => {
                for (f, ty) in fields {
                    self.check(ty, &name.child(Segment::Field(f.clone())), count);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, Value};

    fn fixture() -> (ColumnStore, Schema) {
        let schema = Schema::list(Schema::list(Schema::float64()));
        let v = Value::List(vec![Value::floats([1.1, 2.2]), Value::floats([]), Value::floats([3.3])]);
        let mut store = ColumnStore::new();
        encode(&v, &schema, "x", &mut store).unwrap();
        (store, schema)
    }

    #[test]
    fn encoded_store_is_valid() {
        let (store, schema) = fixture();
        assert!(validate(&store, &schema, "x").is_ok());
    }

    #[test]
    fn first_offset_must_be_zero() {
        let mut store = ColumnStore::new();
        store.insert_column("x-Lo", ColumnData::Int64(vec![1, 3]));
        store.insert_column("x-Ld", ColumnData::Float64(vec![1.0, 2.0, 3.0]));
        let report = validate(&store, &Schema::list(Schema::float64()), "x");
        assert!(report.has(ViolationKind::FirstOffsetNotZero), "{report}");
    }

    #[test]
    fn offsets_must_be_monotone() {
        let mut store = ColumnStore::new();
        store.insert_column("x-Lo", ColumnData::Int64(vec![0, 3, 2]));
        store.insert_column("x-Ld", ColumnData::Float64(vec![1.0, 2.0]));
        let report = validate(&store, &Schema::list(Schema::float64()), "x");
        assert!(report.has(ViolationKind::OffsetsNotMonotone), "{report}");
    }

    #[test]
    fn lengths_must_agree() {
        let (mut store, schema) = fixture();
        store.insert_column("x-Ld-Ld", ColumnData::Float64(vec![1.1]));
        let report = validate(&store, &schema, "x");
        assert!(report.has(ViolationKind::LengthMismatch), "{report}");
    }

    #[test]
    fn missing_and_unexpected_columns() {
        let (mut store, schema) = fixture();
        store.insert_column("x-Ld-R_pt", ColumnData::Float64(vec![]));
        let report = validate(&store, &schema, "x");
        assert!(report.has(ViolationKind::UnexpectedColumn));
        let report = validate(&ColumnStore::new(), &schema, "x");
        assert!(report.has(ViolationKind::MissingColumn));
    }

    #[test]
    fn bad_tags_and_offsets() {
        let schema = Schema::union([Schema::float64(), Schema::int64()]);
        let mut store = ColumnStore::new();
        store.insert_column("u-Ut", ColumnData::UInt8(vec![0, 2]));
        store.insert_column("u-Uo", ColumnData::Int64(vec![0, 0]));
        store.insert_column("u-Ud0", ColumnData::Float64(vec![1.0]));
        store.insert_column("u-Ud1", ColumnData::Int64(vec![]));
        assert!(validate(&store, &schema, "u").has(ViolationKind::TagOutOfRange));
        store.insert_column("u-Ut", ColumnData::UInt8(vec![0, 0]));
        store.insert_column("u-Ud0", ColumnData::Float64(vec![1.0, 2.0]));
        assert!(validate(&store, &schema, "u").has(ViolationKind::UnionOffsetsInconsistent));
    }
}
