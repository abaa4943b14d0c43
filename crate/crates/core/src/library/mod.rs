//! Datalog programs packaged as configurable executable objects.
//!
//! A [`LibraryFunction`] holds a template program whose input relations are
//! "slots" with fixed attribute names. Callers map their own column names
//! onto those attributes with [`LibraryFunction::set_direction`], set
//! parameters, and run the function on their relations.
//!
//! Parameters appear in templates as `$name` tokens and are replaced by
//! typed literals before the template is parsed.

mod builtins;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::analyze::analyze;
use crate::ast::{write_literal_value, Program};
use crate::csv_io::write_csv;
use crate::error::{Error, Result};
use crate::eval::{answer_query, evaluate, Database, EvalStats, Limits};
use crate::parser::parse_program;
use crate::plan::compile;
use crate::relation::{Column, ColumnType, Relation, Schema, Tuple, Value};
use crate::session::Session;

pub use builtins::{
    CONNECTED_COMPONENTS, LINREG_BGD, LINREG_PREDICT, LOGREG_BGD, LOGREG_PREDICT, MLM, SSSP, TC,
};

/// Accepted column types for a slot attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrType {
    Integer,
    /// Numeric; integer input is widened.
    Double,
    Text,
    /// Node or member identifier: integer or string.
    Key,
}

impl AttrType {
    fn from_column(ty: ColumnType) -> AttrType {
        match ty {
            ColumnType::Integer => AttrType::Integer,
            ColumnType::Double => AttrType::Double,
            ColumnType::String => AttrType::Text,
        }
    }

    /// Column type used for an input column of type `input`.
    fn resolve(self, input: ColumnType) -> Option<ColumnType> {
        match (self, input) {
            (AttrType::Integer, ColumnType::Integer) => Some(ColumnType::Integer),
            (AttrType::Double, t) if t.is_numeric() => Some(ColumnType::Double),
            (AttrType::Text, ColumnType::String) => Some(ColumnType::String),
            (AttrType::Key, ColumnType::Integer | ColumnType::String) => Some(input),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            AttrType::Integer => "integer",
            AttrType::Double => "double",
            AttrType::Text => "string",
            AttrType::Key => "integer|string",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotSpec {
    /// Relation name in the template.
    pub name: String,
    pub attributes: Vec<(String, AttrType)>,
}

impl SlotSpec {
    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|(a, _)| a.as_str())
    }

    /// Resolves `FromCol`-style aliases to attribute names.
    fn attribute(&self, key: &str) -> Option<&str> {
        self.attribute_names()
            .find(|a| *a == key)
            .or_else(|| {
                let stripped = key.strip_suffix("Col")?;
                self.attribute_names().find(|a| *a == stripped)
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKind {
    Integer,
    Double,
    Text,
    Key,
    /// Named options, each standing for a literal.
    Choice(&'static [(&'static str, &'static str)]),
}

impl ParamKind {
    fn of_value(v: &Value) -> ParamKind {
        match v {
            Value::Integer(_) => ParamKind::Integer,
            Value::Double(_) => ParamKind::Double,
            Value::Text(_) => ParamKind::Text,
        }
    }

    fn describe(self) -> String {
        match self {
            ParamKind::Integer => "integer".into(),
            ParamKind::Double => "double".into(),
            ParamKind::Text => "string".into(),
            ParamKind::Key => "integer|string".into(),
            ParamKind::Choice(opts) => opts.iter().map(|(n, _)| *n).collect::<Vec<_>>().join("|"),
        }
    }

    fn accept(self, name: &str, v: Value) -> Result<Value> {
        let ok = match (self, &v) {
            (ParamKind::Integer, Value::Integer(_)) => true,
            (ParamKind::Double, Value::Integer(_) | Value::Double(_)) => {
                return v.coerce(ColumnType::Double)
            }
            (ParamKind::Text, Value::Text(_)) => true,
            (ParamKind::Key, Value::Integer(_) | Value::Text(_)) => true,
            (ParamKind::Choice(opts), Value::Text(s)) => {
                if !opts.iter().any(|(n, _)| *n == &**s) {
                    return Err(Error::ParamError(format!(
                        "`{name}` must be one of {}, got {s:?}",
                        self.describe()
                    )));
                }
                true
            }
            _ => false,
        };
        if ok {
            Ok(v)
        } else {
            Err(Error::TypeMismatch(format!(
                "parameter `{name}` expects {}, got {v:?}",
                self.describe()
            )))
        }
    }

    fn literal(self, v: &Value) -> String {
        if let (ParamKind::Choice(opts), Value::Text(s)) = (self, v) {
            if let Some((_, lit)) = opts.iter().find(|(n, _)| *n == &**s) {
                return lit.to_string();
            }
        }
        let mut out = String::new();
        write_literal_value(&mut out, v).expect("write to string");
        out
    }

    /// Stand-in used to type-check a template when a parameter has no default.
    fn placeholder(self) -> Value {
        match self {
            ParamKind::Integer | ParamKind::Key => Value::Integer(0),
            ParamKind::Double => Value::Double(0.0),
            ParamKind::Text => Value::text(""),
            ParamKind::Choice(opts) => Value::text(opts[0].0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub default: Option<Value>,
    pub doc: String,
}

impl ParamSpec {
    pub fn new(name: &str, kind: ParamKind, default: Option<Value>, doc: &str) -> ParamSpec {
        ParamSpec {
            name: name.to_string(),
            kind,
            default,
            doc: doc.to_string(),
        }
    }
}

type Validator = fn(&[Relation], &BTreeMap<String, Value>) -> Result<()>;

/// A catalog entry.
#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub name: String,
    pub doc: String,
    pub template: String,
    pub slots: Vec<SlotSpec>,
    pub params: Vec<ParamSpec>,
    /// Input checks run after schema mapping.
    validate: Option<Validator>,
    /// Catalog name of the matching prediction function.
    predictor: Option<String>,
}

impl FunctionDef {
    fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    fn instantiate(&self, values: &BTreeMap<String, Value>) -> Result<String> {
        substitute(&self.template, |name| {
            let spec = self
                .param(name)
                .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
            let v = values
                .get(name)
                .ok_or_else(|| Error::MissingParam(name.to_string()))?;
            Ok(spec.kind.literal(v))
        })
    }

    /// Parses, analyzes and compiles the template with default (or
    /// placeholder) parameters, and checks its slots against its
    /// declarations.
    fn check(&self) -> Result<()> {
        let values = self
            .params
            .iter()
            .map(|p| {
                let v = p.default.clone().unwrap_or_else(|| p.kind.placeholder());
                (p.name.clone(), v)
            })
            .collect();
        let program = parse_program(&self.instantiate(&values)?)?;
        if program.query.is_none() {
            return Err(Error::SchemaMismatch(format!(
                "template of `{}` has no query",
                self.name
            )));
        }
        for d in &program.decls {
            let Some(slot) = self.slots.iter().find(|s| s.name == d.name) else {
                return Err(Error::SchemaMismatch(format!(
                    "declared relation `{}` is not an input slot",
                    d.name
                )));
            };
            if !slot.attribute_names().eq(d.schema.names()) {
                return Err(Error::SchemaMismatch(format!(
                    "slot `{}` attributes differ from its declaration {}",
                    slot.name, d.schema
                )));
            }
        }
        if let Some(s) = self.slots.iter().find(|s| program.decl(&s.name).is_none()) {
            return Err(Error::SchemaMismatch(format!(
                "slot `{}` is not declared in the template",
                s.name
            )));
        }
        compile(&program, &analyze(&program)?)?;
        Ok(())
    }
}

/// Replaces each `$name` outside string literals with `lookup(name)`.
pub fn substitute(template: &str, mut lookup: impl FnMut(&str) -> Result<String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut chars = template.char_indices().peekable();
    let mut in_string = false;
    while let Some((i, c)) = chars.next() {
        if in_string {
            out.push(c);
            match c {
                '\\' => {
                    if let Some((_, n)) = chars.next() {
                        out.push(n);
                    }
                }
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            '%' => {
                // comment runs to end of line
                out.push(c);
                for (_, n) in chars.by_ref() {
                    out.push(n);
                    if n == '\n' {
                        break;
                    }
                }
            }
            '$' => {
                let start = i + 1;
                let mut end = start;
                while let Some(&(j, n)) = chars.peek() {
                    if n.is_ascii_alphanumeric() || n == '_' {
                        end = j + n.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                if end == start {
                    return Err(Error::ParamError(format!("empty parameter slot at byte {i}")));
                }
                out.push_str(&lookup(&template[start..end])?);
            }
            _ => out.push(c),
        }
    }
    Ok(out)
}

/// Serializable description of a catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionInfo {
    pub name: String,
    pub doc: String,
    pub slots: Vec<SlotInfo>,
    pub params: Vec<ParamInfo>,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotInfo {
    pub name: String,
    pub attributes: Vec<AttrInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttrInfo {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamInfo {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    /// Literal text of the default, if any.
    pub default: Option<String>,
    pub doc: String,
}

/// Built-in and registered functions.
#[derive(Debug, Clone)]
pub struct Catalog {
    defs: Vec<Arc<FunctionDef>>,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::new()
    }
}

impl Catalog {
    /// The built-in functions.
    pub fn new() -> Catalog {
        Catalog {
            defs: builtins::definitions().into_iter().map(Arc::new).collect(),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.defs.iter().map(|d| d.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&FunctionDef> {
        self.defs.iter().find(|d| d.name == name).map(|d| &**d)
    }

    pub fn new_function(&self, name: &str) -> Result<LibraryFunction> {
        let def = self
            .defs
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::UnknownFunction(name.to_string()))?;
        Ok(LibraryFunction::new(def.clone()))
    }

    /// Checks every template.
    pub fn self_check(&self) -> Result<()> {
        for d in &self.defs {
            d.check().map_err(|e| match e {
                Error::Internal(m) => Error::Internal(format!("{}: {m}", d.name)),
                e => e,
            })?;
        }
        Ok(())
    }

    /// Adds a user function. Each slot names a declared relation of the
    /// template; an empty attribute list takes the declaration's columns.
    /// Parameter kinds follow the type of their default values.
    pub fn register_function(
        &mut self,
        name: &str,
        template: &str,
        slots: &[(&str, &[&str])],
        params: &[(&str, Value)],
    ) -> Result<()> {
        if self.get(name).is_some() {
            return Err(Error::NameCollision(name.to_string()));
        }
        let params: Vec<ParamSpec> = params
            .iter()
            .map(|(n, v)| ParamSpec::new(n, ParamKind::of_value(v), Some(v.clone()), ""))
            .collect();
        // declarations are needed to type the slots; parse once with defaults
        let values = params
            .iter()
            .map(|p| (p.name.clone(), p.default.clone().expect("default")))
            .collect();
        let probe = FunctionDef {
            name: name.to_string(),
            doc: String::new(),
            template: template.to_string(),
            slots: vec![],
            params: params.clone(),
            validate: None,
            predictor: None,
        };
        let program = parse_program(&probe.instantiate(&values)?)?;
        let slots = slots
            .iter()
            .map(|(slot, attrs)| {
                let decl = program
                    .decl(slot)
                    .ok_or_else(|| Error::UnknownSlot((*slot).to_string()))?;
                let attributes = if attrs.is_empty() {
                    decl.schema
                        .columns()
                        .iter()
                        .map(|c| (c.name.clone(), AttrType::from_column(c.ty)))
                        .collect()
                } else {
                    attrs
                        .iter()
                        .map(|a| {
                            let i = decl.schema.index_of(a).ok_or_else(|| Error::UnknownAttribute {
                                slot: (*slot).to_string(),
                                attribute: (*a).to_string(),
                            })?;
                            Ok((a.to_string(), AttrType::from_column(decl.schema.columns()[i].ty)))
                        })
                        .collect::<Result<_>>()?
                };
                Ok(SlotSpec {
                    name: (*slot).to_string(),
                    attributes,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let def = FunctionDef { slots, ..probe };
        def.check()?;
        self.defs.push(Arc::new(def));
        Ok(())
    }

    pub fn describe(&self) -> Vec<FunctionInfo> {
        self.defs
            .iter()
            .map(|d| FunctionInfo {
                name: d.name.clone(),
                doc: d.doc.clone(),
                slots: d
                    .slots
                    .iter()
                    .map(|s| SlotInfo {
                        name: s.name.clone(),
                        attributes: s
                            .attributes
                            .iter()
                            .map(|(a, t)| AttrInfo {
                                name: a.clone(),
                                ty: t.name().to_string(),
                            })
                            .collect(),
                    })
                    .collect(),
                params: d
                    .params
                    .iter()
                    .map(|p| ParamInfo {
                        name: p.name.clone(),
                        ty: p.kind.describe(),
                        default: p.default.as_ref().map(|v| match v {
                            Value::Text(s) => s.to_string(),
                            v => p.kind.literal(v),
                        }),
                        doc: p.doc.clone(),
                    })
                    .collect(),
                template: d.template.clone(),
            })
            .collect()
    }

    /// Markdown reference page for all functions.
    pub fn reference_markdown(&self) -> String {
        let mut out = String::from("# Function reference\n");
        for f in self.describe() {
            let _ = write!(out, "\n## {}\n\n{}\n\n", f.name, f.doc);
            out.push_str("Inputs:\n\n");
            for (i, s) in f.slots.iter().enumerate() {
                let attrs: Vec<String> = s
                    .attributes
                    .iter()
                    .map(|a| format!("`{}` ({})", a.name, a.ty))
                    .collect();
                let _ = writeln!(out, "{}. `{}`: {}", i + 1, s.name, attrs.join(", "));
            }
            if !f.params.is_empty() {
                out.push_str("\nParameters:\n\n| name | type | default | description |\n|---|---|---|---|\n");
                for p in &f.params {
                    let _ = writeln!(
                        out,
                        "| `{}` | {} | {} | {} |",
                        p.name,
                        p.ty,
                        p.default.as_deref().map(|d| format!("`{d}`")).unwrap_or_else(|| "required".into()),
                        p.doc
                    );
                }
            }
            let _ = write!(out, "\nTemplate:\n\n```\n{}\n```\n", f.template);
        }
        out
    }
}

/// A configured instance of a catalog function.
#[derive(Debug, Clone)]
pub struct LibraryFunction {
    def: Arc<FunctionDef>,
    params: BTreeMap<String, Value>,
    /// Per slot: attribute → input column.
    mappings: BTreeMap<String, BTreeMap<String, String>>,
}

impl LibraryFunction {
    fn new(def: Arc<FunctionDef>) -> LibraryFunction {
        let params = def
            .params
            .iter()
            .filter_map(|p| Some((p.name.clone(), p.default.clone()?)))
            .collect();
        LibraryFunction {
            def,
            params,
            mappings: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn definition(&self) -> &FunctionDef {
        &self.def
    }

    pub fn slots(&self) -> &[SlotSpec] {
        &self.def.slots
    }

    pub fn param(&self, name: &str) -> Option<&Value> {
        self.params.get(name)
    }

    pub fn mapping(&self, slot: &str) -> Option<&BTreeMap<String, String>> {
        self.mappings.get(slot)
    }

    /// Maps the first slot's attributes to input column names.
    pub fn set_direction(&mut self, mapping: &[(&str, &str)]) -> Result<()> {
        let slot = self.slot_at(0)?;
        self.set_slot_direction(&slot, mapping)
    }

    /// Maps the second slot's attributes to input column names.
    pub fn set_sec_direction(&mut self, mapping: &[(&str, &str)]) -> Result<()> {
        let slot = self.slot_at(1)?;
        self.set_slot_direction(&slot, mapping)
    }

    fn slot_at(&self, i: usize) -> Result<String> {
        self.def
            .slots
            .get(i)
            .map(|s| s.name.clone())
            .ok_or_else(|| Error::UnknownSlot(format!("{} has no input slot #{}", self.def.name, i + 1)))
    }

    /// Keys may be attribute names or attribute names suffixed with `Col`.
    pub fn set_slot_direction(&mut self, slot: &str, mapping: &[(&str, &str)]) -> Result<()> {
        let spec = self
            .def
            .slots
            .iter()
            .find(|s| s.name == slot)
            .ok_or_else(|| Error::UnknownSlot(slot.to_string()))?;
        let mut resolved = BTreeMap::new();
        for (key, column) in mapping {
            let attr = spec.attribute(key).ok_or_else(|| Error::UnknownAttribute {
                slot: slot.to_string(),
                attribute: (*key).to_string(),
            })?;
            if resolved.insert(attr.to_string(), (*column).to_string()).is_some() {
                return Err(Error::SchemaMismatch(format!(
                    "attribute `{attr}` of slot `{slot}` mapped twice"
                )));
            }
        }
        let missing: Vec<String> = spec
            .attribute_names()
            .filter(|a| !resolved.contains_key(*a))
            .map(str::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteMapping {
                slot: slot.to_string(),
                missing,
            });
        }
        self.mappings.insert(slot.to_string(), resolved);
        Ok(())
    }

    pub fn set_param(&mut self, name: &str, value: impl Into<Value>) -> Result<()> {
        let spec = self
            .def
            .param(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        let v = spec.kind.accept(name, value.into())?;
        self.params.insert(name.to_string(), v);
        Ok(())
    }

    /// Template text with parameters substituted.
    pub fn instantiate(&self) -> Result<String> {
        self.def.instantiate(&self.params)
    }

    /// Renames and retypes one input to its slot's declared schema.
    fn map_input(&self, slot: &SlotSpec, input: &Relation) -> Result<Relation> {
        let mapping = self.mappings.get(&slot.name);
        let mut idx = Vec::new();
        let mut columns = Vec::new();
        for (attr, aty) in &slot.attributes {
            let col = mapping.and_then(|m| m.get(attr)).unwrap_or(attr);
            let i = input.schema().index_of(col).ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "input for slot `{}` has no column `{col}` (columns: {})",
                    slot.name,
                    input.schema()
                ))
            })?;
            let ity = input.schema().columns()[i].ty;
            let ty = aty.resolve(ity).ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "column `{col}` of slot `{}` is {}, expected {}",
                    slot.name,
                    ity.name(),
                    aty.name()
                ))
            })?;
            idx.push(i);
            columns.push(Column::new(attr.clone(), ty));
        }
        let mut out = Relation::new(Schema::new(columns)?);
        for row in input.rows() {
            let mapped = idx
                .iter()
                .zip(out.schema().types().collect::<Vec<_>>())
                .map(|(&i, ty)| row[i].clone().coerce(ty))
                .collect::<Result<Tuple>>()?;
            out.insert_unchecked(mapped);
        }
        Ok(out)
    }

    /// Maps the inputs, instantiates the template and evaluates it. Returns
    /// every relation (inputs included) and the query answer.
    pub fn evaluate(&self, inputs: &[Relation], limits: &Limits) -> Result<(Database, Relation, EvalStats)> {
        if inputs.len() != self.def.slots.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} expects {} input relation(s), got {}",
                self.def.name,
                self.def.slots.len(),
                inputs.len()
            )));
        }
        let mapped = self
            .def
            .slots
            .iter()
            .zip(inputs)
            .map(|(s, r)| self.map_input(s, r))
            .collect::<Result<Vec<_>>>()?;
        if let Some(missing) = self.def.params.iter().find(|p| !self.params.contains_key(&p.name)) {
            return Err(Error::MissingParam(missing.name.clone()));
        }
        if let Some(validate) = self.def.validate {
            validate(&mapped, &self.params)?;
        }
        let mut program: Program = parse_program(&self.instantiate()?)?;
        let mut db = Database::new();
        for (slot, rel) in self.def.slots.iter().zip(mapped) {
            if let Some(d) = program.decls.iter_mut().find(|d| d.name == slot.name) {
                d.schema = rel.schema().clone();
            }
            db.insert(slot.name.clone(), rel);
        }
        let plans = compile(&program, &analyze(&program)?)?;
        let (db, stats) = evaluate(&plans, &db, limits)?;
        let query = program.query.as_ref().expect("checked template has a query");
        let answer = answer_query(&db, query)?;
        Ok((db, answer, stats))
    }

    /// Runs the function and returns the query relation (genDF).
    pub fn materialize(&self, inputs: &[Relation], session: &mut Session) -> Result<Relation> {
        let (_, answer, stats) = self.evaluate(inputs, session.limits())?;
        session.record_stats(stats);
        Ok(answer)
    }

    /// Result rows in output order (genRDD).
    pub fn materialize_rows(&self, inputs: &[Relation], session: &mut Session) -> Result<Vec<Tuple>> {
        Ok(self.materialize(inputs, session)?.into_rows().collect())
    }

    /// Runs the function and writes the result as CSV.
    pub fn run(&self, inputs: &[Relation], output: impl AsRef<Path>, session: &mut Session) -> Result<()> {
        write_csv(&self.materialize(inputs, session)?, output)
    }

    /// Applies a model trained by this function to `test`, whose columns
    /// are mapped like the training input minus the label. The model's two
    /// columns are read positionally as (feature, parameter).
    pub fn predict(&self, model: &Relation, test: &Relation, session: &mut Session) -> Result<Relation> {
        let predictor = self.def.predictor.as_deref().ok_or_else(|| {
            Error::SchemaMismatch(format!("{} does not produce a model", self.def.name))
        })?;
        let mut f = session.new_function(predictor)?;
        if model.schema().arity() != 2 {
            return Err(Error::SchemaMismatch(format!(
                "model must have two columns (feature, parameter), got {}",
                model.schema()
            )));
        }
        let names: Vec<&str> = model.schema().names().collect();
        f.set_slot_direction("model", &[("C", names[0]), ("P", names[1])])?;
        if let Some(m) = self.mappings.values().next() {
            let test_map: Vec<(&str, &str)> = ["Id", "C", "V"]
                .iter()
                .filter_map(|a| Some((*a, m.get(*a)?.as_str())))
                .collect();
            f.set_slot_direction("vtest", &test_map)?;
        }
        f.materialize(&[model.clone(), test.clone()], session)
    }
}
