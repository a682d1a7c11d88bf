//! Type trees for nested data and the column-naming convention that encodes them.
//!
//! A [`Schema`] is a finite tree built from four constructors: primitives,
//! variable-length lists, tagged unions and records. Every schema maps onto a
//! set of flat columns whose names spell out the path from the root, so the
//! structure can be recovered from the names alone (primitive widths aside).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Separator between name segments. Field names and prefixes may not contain it.
pub const DELIMITER: char = '-';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("malformed column names: {0}")]
    MalformedNames(String),
    #[error("cannot parse schema text at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DType {
    Bool,
    Int64,
    Float64,
    UInt8,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::Bool, DType::Int64, DType::Float64, DType::UInt8];

    pub fn name(self) -> &'static str {
        match self {
            DType::Bool => "bool",
            DType::Int64 => "int64",
            DType::Float64 => "float64",
            DType::UInt8 => "uint8",
        }
    }

    /// Width in bytes of one element on disk.
    pub fn width(self) -> usize {
        match self {
            DType::Bool | DType::UInt8 => 1,
            DType::Int64 | DType::Float64 => 8,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DType {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DType::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| SchemaError::InvalidSchema(format!("unknown dtype {s:?}")))
    }
}

/// One possibility of a union, optionally carrying a nickname that
/// `isinstance` checks can refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub schema: Schema,
    pub nickname: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    Primitive(DType),
    List(Box<Schema>),
    Union(Vec<Alternative>),
    Record(BTreeMap<String, Schema>),
}

impl Schema {
    pub fn bool() -> Schema {
        Schema::Primitive(DType::Bool)
    }

    pub fn int64() -> Schema {
        Schema::Primitive(DType::Int64)
    }

    pub fn float64() -> Schema {
        Schema::Primitive(DType::Float64)
    }

    pub fn uint8() -> Schema {
        Schema::Primitive(DType::UInt8)
    }

    pub fn list(item: Schema) -> Schema {
        Schema::List(Box::new(item))
    }

    /// Union of unnamed alternatives.
    pub fn union<I: IntoIterator<Item = Schema>>(alternatives: I) -> Schema {
        Schema::Union(
            alternatives
                .into_iter()
                .map(|schema| Alternative { schema, nickname: None })
                .collect(),
        )
    }

    pub fn named_union<I, S>(alternatives: I) -> Schema
    where
        I: IntoIterator<Item = (S, Schema)>,
        S: Into<String>,
    {
        Schema::Union(
            alternatives
                .into_iter()
                .map(|(name, schema)| Alternative { schema, nickname: Some(name.into()) })
                .collect(),
        )
    }

    pub fn record<I, S>(fields: I) -> Schema
    where
        I: IntoIterator<Item = (S, Schema)>,
        S: Into<String>,
    {
        Schema::Record(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    /// Kind name used by `isinstance`: `List`, `Record`, `Union`, or the
    /// scalar kind a primitive reads as (`bool`, `int`, `float`).
    pub fn kind_name(&self) -> &'static str {
        match self {
            Schema::Primitive(DType::Bool) => "bool",
            Schema::Primitive(DType::Int64) | Schema::Primitive(DType::UInt8) => "int",
            Schema::Primitive(DType::Float64) => "float",
            Schema::List(_) => "List",
            Schema::Union(_) => "Union",
            Schema::Record(_) => "Record",
        }
    }

    pub fn is_primitive(&self) -> bool {
        matches!(self, Schema::Primitive(_))
    }

    /// Checks the structural invariants: unions have at least two (and at most
    /// 256) alternatives, records at least one field, and field names are
    /// non-empty identifiers free of the delimiter.
    pub fn validate(&self) -> Result<(), SchemaError> {
        match self {
            Schema::Primitive(_) => Ok(()),
            Schema::List(item) => item.validate(),
            Schema::Union(alts) => {
                if alts.len() < 2 {
                    return Err(SchemaError::InvalidSchema(format!(
                        "union needs at least 2 alternatives, found {}",
                        alts.len()
                    )));
                }
                if alts.len() > 256 {
                    return Err(SchemaError::InvalidSchema(
                        "union tags are 8-bit; at most 256 alternatives".into(),
                    ));
                }
                let mut seen = BTreeSet::new();
                for alt in alts {
                    if let Some(nick) = &alt.nickname {
                        check_identifier(nick, "union nickname")?;
                        if !seen.insert(nick) {
                            return Err(SchemaError::InvalidSchema(format!(
                                "duplicate union nickname {nick:?}"
                            )));
                        }
                    }
                    alt.schema.validate()?;
                }
                Ok(())
            }
            Schema::Record(fields) => {
                if fields.is_empty() {
                    return Err(SchemaError::InvalidSchema("record needs at least 1 field".into()));
                }
                for (name, field) in fields {
                    check_identifier(name, "field name")?;
                    field.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Copy of the schema with every union nickname removed.
    pub fn without_nicknames(&self) -> Schema {
        match self {
            Schema::Primitive(d) => Schema::Primitive(*d),
            Schema::List(item) => Schema::list(item.without_nicknames()),
            Schema::Union(alts) => Schema::union(alts.iter().map(|a| a.schema.without_nicknames())),
            Schema::Record(fields) => Schema::Record(
                fields.iter().map(|(k, v)| (k.clone(), v.without_nicknames())).collect(),
            ),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Schema::Primitive(_) => 1,
            Schema::List(item) => 1 + item.depth(),
            Schema::Union(alts) => 1 + alts.iter().map(|a| a.schema.depth()).max().unwrap_or(0),
            Schema::Record(fields) => 1 + fields.values().map(Schema::depth).max().unwrap_or(0),
        }
    }
}

fn check_identifier(name: &str, what: &str) -> Result<(), SchemaError> {
    if name.contains(DELIMITER) {
        return Err(SchemaError::InvalidSchema(format!(
            "{what} {name:?} must not contain the character '{DELIMITER}'"
        )));
    }
    let mut chars = name.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ok {
        return Err(SchemaError::InvalidSchema(format!("{what} {name:?} is not an identifier")));
    }
    Ok(())
}

fn check_prefix(prefix: &str) -> Result<(), SchemaError> {
    check_identifier(prefix, "column prefix")
}

/// One step of a column name below its prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Segment {
    ListOffset,
    ListData,
    UnionTag,
    UnionOffset,
    UnionData(u8),
    Field(String),
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Segment::ListOffset => write!(f, "{DELIMITER}Lo"),
            Segment::ListData => write!(f, "{DELIMITER}Ld"),
            Segment::UnionTag => write!(f, "{DELIMITER}Ut"),
            Segment::UnionOffset => write!(f, "{DELIMITER}Uo"),
            Segment::UnionData(t) => write!(f, "{DELIMITER}Ud{t}"),
            Segment::Field(name) => write!(f, "{DELIMITER}R_{name}"),
        }
    }
}

/// A column name: a prefix followed by a path of segments, rendered as e.g.
/// `events-Ld-R_muons-Lo`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnName {
    pub prefix: String,
    pub path: Vec<Segment>,
}

impl ColumnName {
    pub fn new(prefix: impl Into<String>) -> ColumnName {
        ColumnName { prefix: prefix.into(), path: Vec::new() }
    }

    pub fn child(&self, segment: Segment) -> ColumnName {
        let mut path = self.path.clone();
        path.push(segment);
        ColumnName { prefix: self.prefix.clone(), path }
    }

    pub fn render(&self) -> String {
        self.to_string()
    }

    pub fn parse(rendered: &str) -> Result<ColumnName, SchemaError> {
        let mut parts = rendered.split(DELIMITER);
        let prefix = parts.next().unwrap_or_default();
        check_prefix(prefix).map_err(|e| SchemaError::MalformedNames(e.to_string()))?;
        let path = parts
            .map(|part| match part {
                "Lo" => Ok(Segment::ListOffset),
                "Ld" => Ok(Segment::ListData),
                "Ut" => Ok(Segment::UnionTag),
                "Uo" => Ok(Segment::UnionOffset),
                _ => {
                    if let Some(digits) = part.strip_prefix("Ud") {
                        let ok = !digits.is_empty()
                            && digits.bytes().all(|b| b.is_ascii_digit())
                            && (digits == "0" || !digits.starts_with('0'));
                        match digits.parse::<u8>() {
                            Ok(t) if ok => Ok(Segment::UnionData(t)),
                            _ => Err(SchemaError::MalformedNames(format!(
                                "bad union data segment {part:?} in {rendered:?}"
                            ))),
                        }
                    } else if let Some(field) = part.strip_prefix("R_") {
                        check_identifier(field, "field name")
                            .map_err(|e| SchemaError::MalformedNames(e.to_string()))?;
                        Ok(Segment::Field(field.to_string()))
                    } else {
                        Err(SchemaError::MalformedNames(format!(
                            "unknown segment {part:?} in {rendered:?}"
                        )))
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ColumnName { prefix: prefix.to_string(), path })
    }
}

impl fmt::Display for ColumnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.prefix)?;
        for seg in &self.path {
            write!(f, "{seg}")?;
        }
        Ok(())
    }
}

impl FromStr for ColumnName {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ColumnName::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    PrimitiveData(DType),
    ListOffset,
    UnionTag,
    UnionOffset,
}

impl ColumnRole {
    /// Storage type of the column.
    pub fn dtype(self) -> DType {
        match self {
            ColumnRole::PrimitiveData(d) => d,
            ColumnRole::ListOffset | ColumnRole::UnionOffset => DType::Int64,
            ColumnRole::UnionTag => DType::UInt8,
        }
    }
}

/// Every column the encoder creates for `schema` under `prefix`, including
/// columns that stay empty and the derived union-offset columns.
pub fn columns_for(
    schema: &Schema,
    prefix: &str,
) -> Result<BTreeMap<ColumnName, ColumnRole>, SchemaError> {
    check_prefix(prefix)?;
    schema.validate()?;
    let mut out = BTreeMap::new();
    collect_columns(schema, ColumnName::new(prefix), &mut out);
    Ok(out)
}

fn collect_columns(schema: &Schema, name: ColumnName, out: &mut BTreeMap<ColumnName, ColumnRole>) {
    match schema {
        Schema::Primitive(d) => {
            out.insert(name, ColumnRole::PrimitiveData(*d));
        }
        Schema::List(item) => {
            out.insert(name.child(Segment::ListOffset), ColumnRole::ListOffset);
            collect_columns(item, name.child(Segment::ListData), out);
        }
        Schema::Union(alts) => {
            out.insert(name.child(Segment::UnionTag), ColumnRole::UnionTag);
            out.insert(name.child(Segment::UnionOffset), ColumnRole::UnionOffset);
            for (t, alt) in alts.iter().enumerate() {
                collect_columns(&alt.schema, name.child(Segment::UnionData(t as u8)), out);
            }
        }
        Schema::Record(fields) => {
            for (field, ty) in fields {
                collect_columns(ty, name.child(Segment::Field(field.clone())), out);
            }
        }
    }
}

/// Reconstructs a schema from a set of column names sharing one prefix.
///
/// `dtypes` must give the dtype of every primitive-data column; structural
/// columns are checked against their fixed integer types when present.
pub fn schema_from_names(
    names: &BTreeSet<ColumnName>,
    dtypes: &BTreeMap<ColumnName, DType>,
) -> Result<Schema, SchemaError> {
    let prefix = match names.iter().next() {
        Some(n) => n.prefix.clone(),
        None => return Err(SchemaError::MalformedNames("no columns".into())),
    };
    if let Some(other) = names.iter().find(|n| n.prefix != prefix) {
        return Err(SchemaError::MalformedNames(format!(
            "columns have different prefixes: {prefix:?} and {:?}",
            other.prefix
        )));
    }
    let entries: Vec<(&[Segment], &ColumnName)> =
        names.iter().map(|n| (n.path.as_slice(), n)).collect();
    infer(&entries, dtypes)
}

fn infer(
    entries: &[(&[Segment], &ColumnName)],
    dtypes: &BTreeMap<ColumnName, DType>,
) -> Result<Schema, SchemaError> {
    let malformed = |msg: String| SchemaError::MalformedNames(msg);
    let listing = || {
        entries.iter().map(|(_, n)| n.render()).collect::<Vec<_>>().join(", ")
    };
    let check_dtype = |name: &ColumnName, want: DType| -> Result<(), SchemaError> {
        match dtypes.get(name) {
            Some(d) if *d != want => Err(malformed(format!(
                "column {name} must be {want}, found {d}"
            ))),
            _ => Ok(()),
        }
    };

    match entries.first().map(|(p, _)| p.first()) {
        None => Err(malformed("empty column group".into())),
        Some(None) => {
            if entries.len() != 1 {
                return Err(malformed(format!("primitive column mixed with others: {}", listing())));
            }
            let name = entries[0].1;
            let dtype = dtypes
                .get(name)
                .ok_or_else(|| malformed(format!("no dtype for column {name}")))?;
            Ok(Schema::Primitive(*dtype))
        }
        Some(Some(Segment::ListOffset | Segment::ListData)) => {
            let mut offsets = None;
            let mut data = Vec::new();
            for (path, name) in entries {
                match path.split_first() {
                    Some((Segment::ListOffset, [])) if offsets.is_none() => offsets = Some(*name),
                    Some((Segment::ListData, rest)) => data.push((rest, *name)),
                    _ => return Err(malformed(format!("not a list layout: {}", listing()))),
                }
            }
            let offsets =
                offsets.ok_or_else(|| malformed(format!("list without offsets: {}", listing())))?;
            check_dtype(offsets, DType::Int64)?;
            if data.is_empty() {
                return Err(malformed(format!("list without data columns: {offsets}")));
            }
            Ok(Schema::list(infer(&data, dtypes)?))
        }
        Some(Some(Segment::UnionTag | Segment::UnionOffset | Segment::UnionData(_))) => {
            let mut tags = None;
            let mut offsets = None;
            let mut alts: BTreeMap<u8, Vec<(&[Segment], &ColumnName)>> = BTreeMap::new();
            for (path, name) in entries {
                match path.split_first() {
                    Some((Segment::UnionTag, [])) if tags.is_none() => tags = Some(*name),
                    Some((Segment::UnionOffset, [])) if offsets.is_none() => offsets = Some(*name),
                    Some((Segment::UnionData(t), rest)) => alts.entry(*t).or_default().push((rest, *name)),
                    _ => return Err(malformed(format!("not a union layout: {}", listing()))),
                }
            }
            let tags = tags.ok_or_else(|| malformed(format!("union without tags: {}", listing())))?;
            check_dtype(tags, DType::UInt8)?;
            if let Some(o) = offsets {
                check_dtype(o, DType::Int64)?;
            }
            if alts.len() < 2 || alts.keys().enumerate().any(|(i, t)| i != *t as usize) {
                return Err(malformed(format!(
                    "union alternatives must be numbered 0..n with n >= 2: {}",
                    listing()
                )));
            }
            let alternatives = alts
                .values()
                .map(|group| infer(group, dtypes))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Schema::union(alternatives))
        }
        Some(Some(Segment::Field(_))) => {
            let mut fields: BTreeMap<&str, Vec<(&[Segment], &ColumnName)>> = BTreeMap::new();
            for (path, name) in entries {
                match path.split_first() {
                    Some((Segment::Field(f), rest)) => fields.entry(f.as_str()).or_default().push((rest, *name)),
                    _ => return Err(malformed(format!("not a record layout: {}", listing()))),
                }
            }
            let fields = fields
                .into_iter()
                .map(|(f, group)| Ok((f.to_string(), infer(&group, dtypes)?)))
                .collect::<Result<BTreeMap<_, _>, SchemaError>>()?;
            Ok(Schema::Record(fields))
        }
    }
}

/// Structural compatibility: can a value of type `offered` be used where
/// `required` is expected? Records may carry extra fields; every alternative
/// of an offered union must fit some required alternative.
pub fn accepts(required: &Schema, offered: &Schema) -> bool {
    let mut offered_alts = Vec::new();
    flatten_alternatives(offered, &mut offered_alts);
    let mut required_alts = Vec::new();
    flatten_alternatives(required, &mut required_alts);
    offered_alts
        .iter()
        .all(|o| required_alts.iter().any(|r| accepts_single(r, o)))
}

fn flatten_alternatives<'a>(schema: &'a Schema, out: &mut Vec<&'a Schema>) {
    match schema {
        Schema::Union(alts) => alts.iter().for_each(|a| flatten_alternatives(&a.schema, out)),
        other => out.push(other),
    }
}

fn accepts_single(required: &Schema, offered: &Schema) -> bool {
    match (required, offered) {
        (Schema::Primitive(a), Schema::Primitive(b)) => a == b,
        (Schema::List(a), Schema::List(b)) => accepts(a, b),
        (Schema::Record(req), Schema::Record(off)) => req
            .iter()
            .all(|(name, r)| off.get(name).is_some_and(|o| accepts(r, o))),
        _ => false,
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schema::Primitive(d) => write!(f, "{d}"),
            Schema::List(item) => write!(f, "List<{item}>"),
            Schema::Union(alts) => {
                f.write_str("Union<")?;
                for (i, alt) in alts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    if let Some(nick) = &alt.nickname {
                        write!(f, "{nick}: ")?;
                    }
                    write!(f, "{}", alt.schema)?;
                }
                f.write_str(">")
            }
            Schema::Record(fields) => {
                f.write_str("Record{")?;
                for (i, (name, ty)) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{name}: {ty}")?;
                }
                f.write_str("}")
            }
        }
    }
}

impl FromStr for Schema {
    type Err = SchemaError;

    /// Parses the textual form produced by `Display`, e.g.
    /// `List<Record{pt: float64, eta: float64}>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = SchemaParser { src: s, pos: 0 };
        let schema = p.schema()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.error("trailing input"));
        }
        schema.validate()?;
        Ok(schema)
    }
}

struct SchemaParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> SchemaParser<'a> {
    fn error(&self, message: &str) -> SchemaError {
        SchemaError::Parse { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), SchemaError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {token:?}")))
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let src = self.src;
        let rest = &src[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(i, c)| !(c.is_ascii_alphanumeric() || c == '_') || (i == 0 && c.is_ascii_digit()))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some(&rest[..len])
    }

    fn schema(&mut self) -> Result<Schema, SchemaError> {
        let start = self.pos;
        let word = self.ident().ok_or_else(|| self.error("expected a type"))?.to_string();
        match word.as_str() {
            "List" => {
                self.expect("<")?;
                let item = self.schema()?;
                self.expect(">")?;
                Ok(Schema::list(item))
            }
            "Union" => {
                self.expect("<")?;
                let mut alts = vec![self.alternative()?];
                while self.eat(",") {
                    alts.push(self.alternative()?);
                }
                self.expect(">")?;
                Ok(Schema::Union(alts))
            }
            "Record" => {
                self.expect("{")?;
                let mut fields = BTreeMap::new();
                loop {
                    let name = self.ident().ok_or_else(|| self.error("expected a field name"))?.to_string();
                    self.expect(":")?;
                    let ty = self.schema()?;
                    if fields.insert(name.clone(), ty).is_some() {
                        return Err(self.error(&format!("duplicate field {name:?}")));
                    }
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect("}")?;
                Ok(Schema::Record(fields))
            }
            other => other.parse::<DType>().map(Schema::Primitive).map_err(|_| {
                self.pos = start;
                self.error(&format!("unknown type {other:?}"))
            }),
        }
    }

    fn alternative(&mut self) -> Result<Alternative, SchemaError> {
        let save = self.pos;
        if let Some(word) = self.ident() {
            let word = word.to_string();
            if self.eat(":") {
                let schema = self.schema()?;
                return Ok(Alternative { schema, nickname: Some(word) });
            }
        }
        self.pos = save;
        Ok(Alternative { schema: self.schema()?, nickname: None })
    }
}
