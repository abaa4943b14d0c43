//! Typed values, schemas and set-semantics relations.

use std::cmp::Ordering;
use std::collections::btree_set;
use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Integer,
    Double,
    #[serde(alias = "text")]
    String,
}

impl ColumnType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Integer | ColumnType::Double)
    }

    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Integer => "integer",
            ColumnType::Double => "double",
            ColumnType::String => "string",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ColumnType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integer" => Ok(ColumnType::Integer),
            "double" => Ok(ColumnType::Double),
            "string" | "text" => Ok(ColumnType::String),
            other => Err(Error::InvalidSchema(format!("unknown column type `{other}`"))),
        }
    }
}

/// A single typed value.
///
/// Doubles are never NaN and `-0.0` is stored as `0.0`, so equality and
/// hashing can use the bit pattern and ordering is total.
#[derive(Clone)]
pub enum Value {
    Integer(i64),
    Double(f64),
    Text(Arc<str>),
}

impl Value {
    /// Builds a double, rejecting NaN and normalizing negative zero.
    pub fn double(v: f64) -> Result<Value> {
        if v.is_nan() {
            return Err(Error::Arithmetic("NaN is not a valid value".into()));
        }
        Ok(Value::Double(if v == 0.0 { 0.0 } else { v }))
    }

    pub fn text(s: impl AsRef<str>) -> Value {
        Value::Text(Arc::from(s.as_ref()))
    }

    pub fn column_type(&self) -> ColumnType {
        match self {
            Value::Integer(_) => ColumnType::Integer,
            Value::Double(_) => ColumnType::Double,
            Value::Text(_) => ColumnType::String,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(i) => Some(*i as f64),
            Value::Double(d) => Some(*d),
            Value::Text(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Integer(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Converts into `ty`, widening integers to doubles. Any other change of
    /// type is an error.
    pub fn coerce(self, ty: ColumnType) -> Result<Value> {
        match (self, ty) {
            (v @ Value::Integer(_), ColumnType::Integer)
            | (v @ Value::Double(_), ColumnType::Double)
            | (v @ Value::Text(_), ColumnType::String) => Ok(v),
            (Value::Integer(i), ColumnType::Double) => Value::double(i as f64),
            (v, ty) => Err(Error::type_mismatch(ty, v.column_type())),
        }
    }

    /// Comparison used by guards: numeric across Integer/Double, bytewise on
    /// text, `None` when the operands are not comparable.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
            (Value::Text(a), Value::Text(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
            (Value::Text(_), _) | (_, Value::Text(_)) => None,
            (a, b) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        }
    }

    /// Parses `s` as a value of type `ty`.
    pub fn parse_as(s: &str, ty: ColumnType) -> Result<Value> {
        match ty {
            ColumnType::Integer => s
                .trim()
                .parse::<i64>()
                .map(Value::Integer)
                .map_err(|_| Error::type_mismatch(ty, format!("`{s}`"))),
            ColumnType::Double => {
                let t = s.trim();
                let v = t
                    .parse::<f64>()
                    .ok()
                    .filter(|_| !t.eq_ignore_ascii_case("nan") && !t.is_empty())
                    .ok_or_else(|| Error::type_mismatch(ty, format!("`{s}`")))?;
                Value::double(v)
            }
            ColumnType::String => Ok(Value::text(s)),
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Value::Integer(_) => 0,
            Value::Double(_) => 1,
            Value::Text(_) => 2,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => a == b,
            (Value::Double(a), Value::Double(b)) => a.to_bits() == b.to_bits(),
            (Value::Text(a), Value::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.tag().hash(state);
        match self {
            Value::Integer(i) => i.hash(state),
            Value::Double(d) => d.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (Value::Double(a), Value::Double(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            (a, b) => a.tag().cmp(&b.tag()),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Integer(i) => write!(f, "{i}"),
            Value::Double(d) => write!(f, "{d:?}"),
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

/// Plain rendering: integers as-is, doubles in shortest round-trip form
/// (always with a fraction or exponent), text unquoted.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Integer(i) => write!(f, "{i}"),
            Value::Double(d) => write!(f, "{d:?}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Integer(v)
    }
}

impl From<i32> for Value {
    fn from(v: i32) -> Self {
        Value::Integer(v.into())
    }
}

/// Panics on NaN; use [`Value::double`] for unchecked input.
impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::double(v).expect("NaN is not a value")
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::text(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::text(v)
    }
}

pub type Tuple = Vec<Value>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
        }
    }
}

/// Ordered, uniquely named, non-empty list of typed columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Schema> {
        if columns.is_empty() {
            return Err(Error::InvalidSchema("a schema needs at least one column".into()));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(Error::InvalidSchema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Schema { columns })
    }

    /// Convenience constructor from `(name, type)` pairs.
    pub fn of(columns: &[(&str, ColumnType)]) -> Result<Schema> {
        Schema::new(columns.iter().map(|(n, t)| Column::new(*n, *t)).collect())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn types(&self) -> impl Iterator<Item = ColumnType> + '_ {
        self.columns.iter().map(|c| c.ty)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Same column types in the same order, names ignored.
    pub fn same_types(&self, other: &Schema) -> bool {
        self.types().eq(other.types())
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", c.name, c.ty)?;
        }
        f.write_str(")")
    }
}

/// A schema plus a duplicate-free set of rows, iterated in lexicographic
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    schema: Schema,
    rows: BTreeSet<Tuple>,
}

impl Relation {
    pub fn new(schema: Schema) -> Relation {
        Relation {
            schema,
            rows: BTreeSet::new(),
        }
    }

    pub fn from_rows<I>(schema: Schema, rows: I) -> Result<Relation>
    where
        I: IntoIterator<Item = Tuple>,
    {
        let mut rel = Relation::new(schema);
        for row in rows {
            rel.insert(row)?;
        }
        Ok(rel)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> btree_set::Iter<'_, Tuple> {
        self.rows.iter()
    }

    pub fn contains(&self, row: &[Value]) -> bool {
        self.rows.contains(row)
    }

    /// Inserts a row after checking arity and column types; integers are
    /// widened into double columns. Returns whether the row was new.
    pub fn insert(&mut self, row: Tuple) -> Result<bool> {
        if row.len() != self.schema.arity() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, schema {} has {}",
                row.len(),
                self.schema,
                self.schema.arity()
            )));
        }
        let row = row
            .into_iter()
            .zip(self.schema.types())
            .map(|(v, ty)| v.coerce(ty))
            .collect::<Result<Tuple>>()?;
        Ok(self.rows.insert(row))
    }

    /// Inserts a row already known to match the schema.
    pub(crate) fn insert_unchecked(&mut self, row: Tuple) -> bool {
        debug_assert_eq!(row.len(), self.schema.arity());
        self.rows.insert(row)
    }

    pub(crate) fn remove(&mut self, row: &[Value]) -> bool {
        self.rows.remove(row)
    }

    pub fn union(&mut self, other: &Relation) -> Result<()> {
        if !self.schema.same_types(&other.schema) {
            return Err(Error::SchemaMismatch(format!(
                "cannot union {} with {}",
                self.schema, other.schema
            )));
        }
        self.rows.extend(other.rows.iter().cloned());
        Ok(())
    }

    pub fn into_rows(self) -> impl Iterator<Item = Tuple> {
        self.rows.into_iter()
    }

    /// Renames columns per `(old, new)` pairs; rows are untouched.
    pub fn rename_columns(&self, mapping: &[(&str, &str)]) -> Result<Relation> {
        let mut columns = self.schema.columns.clone();
        for (old, new) in mapping {
            let idx = self
                .schema
                .index_of(old)
                .ok_or_else(|| Error::UnknownColumn((*old).to_string()))?;
            columns[idx].name = (*new).to_string();
        }
        Ok(Relation {
            schema: Schema::new(columns)?,
            rows: self.rows.clone(),
        })
    }

    /// Same rows under a schema with identical types but different names.
    pub fn with_schema(self, schema: Schema) -> Result<Relation> {
        if !self.schema.same_types(&schema) {
            return Err(Error::SchemaMismatch(format!(
                "cannot relabel {} as {}",
                self.schema, schema
            )));
        }
        Ok(Relation {
            schema,
            rows: self.rows,
        })
    }

    /// Keeps the named columns in the given order, converting each to the
    /// requested type. Duplicates produced by dropping columns collapse.
    pub fn project(&self, columns: &[(&str, ColumnType)]) -> Result<Relation> {
        let idx = columns
            .iter()
            .map(|(name, _)| {
                self.schema
                    .index_of(name)
                    .ok_or_else(|| Error::UnknownColumn((*name).to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let schema = Schema::of(columns)?;
        let mut out = Relation::new(schema);
        for row in &self.rows {
            let projected = idx
                .iter()
                .zip(columns)
                .map(|(&i, (_, ty))| row[i].clone().coerce(*ty))
                .collect::<Result<Tuple>>()?;
            out.insert_unchecked(projected);
        }
        Ok(out)
    }
}
