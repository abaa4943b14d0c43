//! A bottom-up Datalog engine with aggregates in recursion, and a library of
//! recursive algorithms packaged as configurable executable objects.
//!
//! The pipeline is: [`parse_program`] → [`analyze`] → [`compile`] →
//! [`evaluate`]. Library functions ([`library`]) wrap that pipeline behind
//! schema mapping and parameters, and [`Session`] holds named relations and
//! execution statistics for one working context.

pub mod analyze;
pub mod ast;
pub mod csv_io;
pub mod error;
pub mod eval;
pub mod library;
pub mod parser;
pub mod plan;
pub mod relation;
pub mod repl;
pub mod session;

pub use analyze::{analyze, is_recursive, Stratification};
pub use ast::{format_program, Program};
pub use csv_io::{detect_header, read_csv, read_csv_from, write_csv, write_csv_to};
pub use error::{Error, Limit, Pos, Result};
pub use eval::{
    answer_query, eval_aggregate, evaluate, evaluate_naive, Database, EvalStats, Limits, StratumStats,
};
pub use library::{Catalog, LibraryFunction};
pub use parser::{parse_program, parse_relation_decl};
pub use plan::{compile, PlanNode, StratumPlan};
pub use relation::{Column, ColumnType, Relation, Schema, Tuple, Value};
pub use repl::Repl;
pub use session::{build_session, format_table, Outcome, Session};
