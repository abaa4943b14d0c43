//! A working context: named relations, the function catalog, limits and
//! a log of evaluation statistics.

use std::collections::BTreeSet;
use std::path::Path;

use crate::analyze::analyze;
use crate::ast::{Decl, Literal, Program, Span};
use crate::csv_io::{detect_header, read_csv};
use crate::error::{Error, Pos, Result};
use crate::eval::{answer_query, evaluate, Database, EvalStats, Limits};
use crate::library::{Catalog, LibraryFunction};
use crate::parser::{check_program, parse_program};
use crate::plan::compile;
use crate::relation::{ColumnType, Relation, Schema, Value};

/// Result of running a program in a session.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// Input and derived relations.
    pub database: Database,
    /// Rows matching the program's query, if it has one.
    pub answer: Option<Relation>,
    pub stats: EvalStats,
}

#[derive(Debug, Clone)]
pub struct Session {
    app_name: String,
    relations: Database,
    functions: Catalog,
    stats: Vec<EvalStats>,
    limits: Limits,
}

/// A fresh session with an empty catalog and the given (or default) limits.
pub fn build_session(app_name: &str, limits: Option<Limits>) -> Session {
    let mut s = Session::new(app_name);
    if let Some(l) = limits {
        s.limits = l;
    }
    s
}

impl Session {
    pub fn new(app_name: &str) -> Session {
        Session {
            app_name: app_name.to_string(),
            relations: Database::new(),
            functions: Catalog::new(),
            stats: Vec::new(),
            limits: Limits::default(),
        }
    }

    pub fn app_name(&self) -> &str {
        &self.app_name
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn set_limits(&mut self, limits: Limits) {
        self.limits = limits;
    }

    pub fn relations(&self) -> &Database {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn add_relation(&mut self, name: &str, rel: Relation) -> Option<Relation> {
        self.relations.insert(name, rel)
    }

    pub fn remove_relation(&mut self, name: &str) -> Option<Relation> {
        self.relations.remove(name)
    }

    /// Loads a CSV file under `name`. A first line equal to the column
    /// names is treated as a header. Returns the number of distinct rows.
    pub fn load_csv(&mut self, name: &str, path: impl AsRef<Path>, schema: &Schema) -> Result<usize> {
        let path = path.as_ref();
        let header = detect_header(path, schema)?;
        let rel = read_csv(path, schema, header)?;
        let n = rel.len();
        self.relations.insert(name, rel);
        Ok(n)
    }

    pub fn functions(&self) -> &Catalog {
        &self.functions
    }

    pub fn new_function(&self, name: &str) -> Result<LibraryFunction> {
        self.functions.new_function(name)
    }

    pub fn register_function(
        &mut self,
        name: &str,
        template: &str,
        slots: &[(&str, &[&str])],
        params: &[(&str, Value)],
    ) -> Result<()> {
        self.functions.register_function(name, template, slots, params)
    }

    pub fn record_stats(&mut self, stats: EvalStats) {
        self.stats.push(stats);
    }

    pub fn stats_log(&self) -> &[EvalStats] {
        &self.stats
    }

    /// Drops every relation and the stats log. Registered functions stay.
    pub fn reset(&mut self) {
        self.relations = Database::new();
        self.stats.clear();
    }

    /// Adds declarations for body predicates that are neither declared nor
    /// derived but exist as session relations.
    pub fn complete_declarations(&self, program: &mut Program) {
        let idb: BTreeSet<String> = program.idb_predicates().into_iter().map(str::to_string).collect();
        let mut missing = Vec::new();
        for rule in &program.rules {
            for lit in &rule.body {
                if let Literal::Positive(a) = lit {
                    if !idb.contains(&a.predicate)
                        && program.decl(&a.predicate).is_none()
                        && !missing.iter().any(|d: &Decl| d.name == a.predicate)
                    {
                        if let Some(rel) = self.relations.get(&a.predicate) {
                            missing.push(Decl {
                                name: a.predicate.clone(),
                                schema: rel.schema().clone(),
                                span: Span(Pos::new(0, 0)),
                            });
                        }
                    }
                }
            }
        }
        program.decls.extend(missing);
    }

    /// Session relations for each declaration, renamed to the declared
    /// columns and widened where the declaration asks for doubles.
    fn inputs_for(&self, program: &Program) -> Result<Database> {
        let mut db = Database::new();
        for d in &program.decls {
            let rel = self
                .relations
                .get(&d.name)
                .ok_or_else(|| Error::MissingRelation(d.name.clone()))?;
            if rel.schema().arity() != d.schema.arity() {
                return Err(Error::SchemaMismatch(format!(
                    "relation `{}` has schema {}, declared as {}",
                    d.name,
                    rel.schema(),
                    d.schema
                )));
            }
            for (have, want) in rel.schema().columns().iter().zip(d.schema.columns()) {
                let ok = have.ty == want.ty
                    || (have.ty == ColumnType::Integer && want.ty == ColumnType::Double);
                if !ok {
                    return Err(Error::SchemaMismatch(format!(
                        "column `{}` of `{}` is {}, declared {}",
                        have.name,
                        d.name,
                        have.ty.name(),
                        want.ty.name()
                    )));
                }
            }
            let rel = if rel.schema().same_types(&d.schema) {
                rel.clone().with_schema(d.schema.clone())?
            } else {
                Relation::from_rows(d.schema.clone(), rel.rows().cloned())?
            };
            db.insert(d.name.clone(), rel);
        }
        Ok(db)
    }

    /// Evaluates a checked program against the session's relations and
    /// logs its statistics.
    pub fn run_program(&mut self, program: &Program) -> Result<Outcome> {
        let mut program = program.clone();
        self.complete_declarations(&mut program);
        check_program(&program)?;
        let inputs = self.inputs_for(&program)?;
        let plans = compile(&program, &analyze(&program)?)?;
        let (database, stats) = evaluate(&plans, &inputs, &self.limits)?;
        let answer = program
            .query
            .as_ref()
            .map(|q| answer_query(&database, q))
            .transpose()?;
        self.stats.push(stats.clone());
        Ok(Outcome {
            database,
            answer,
            stats,
        })
    }

    pub fn run_text(&mut self, text: &str) -> Result<Outcome> {
        self.run_program(&parse_program(text)?)
    }
}

/// Column-aligned text table with a header row and a separator.
pub fn format_table(rel: &Relation) -> String {
    let headers: Vec<String> = rel.schema().names().map(str::to_string).collect();
    let rows: Vec<Vec<String>> = rel
        .rows()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = line(&headers);
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    let n = rows.len();
    out.push_str(&format!("({n} row{})\n", if n == 1 { "" } else { "s" }));
    out
}
