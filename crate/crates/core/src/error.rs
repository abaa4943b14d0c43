use std::fmt;

use crate::relation::ColumnType;

/// A 1-based line/column position in program text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl Pos {
    pub fn new(line: usize, column: usize) -> Self {
        Pos { line, column }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Which evaluation limit was hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Iterations,
    Rows,
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Limit::Iterations => f.write_str("max_iterations"),
            Limit::Rows => f.write_str("max_rows"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV parse error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("syntax error at {pos}: expected {}, found {found}", expected.join(" | "))]
    Syntax {
        pos: Pos,
        expected: Vec<String>,
        found: String,
    },
    #[error("arity error at {pos}: `{predicate}` used with {found} arguments, expected {expected}")]
    Arity {
        predicate: String,
        expected: usize,
        found: usize,
        pos: Pos,
    },
    #[error("unsafe variable `{variable}` at {pos}: not bound by a positive body atom or assignment")]
    Safety { variable: String, pos: Pos },
    #[error("variable `{variable}` assigned twice in one rule body at {pos}")]
    DoubleAssignment { variable: String, pos: Pos },
    #[error("declared relation `{predicate}` used as a rule head at {pos}")]
    DeclConflict { predicate: String, pos: Pos },

    #[error("undefined predicate `{predicate}`{}", pos.map(|p| format!(" at {p}")).unwrap_or_default())]
    UndefinedPredicate { predicate: String, pos: Option<Pos> },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("aggregate in recursive predicate `{predicate}` cannot be stratified: {reason}")]
    UnstratifiableAggregate { predicate: String, reason: String },
    #[error("conflicting aggregate heads for `{predicate}`: {reason}")]
    AggregateConflict { predicate: String, reason: String },

    #[error("limit exceeded: {limit} = {value}")]
    LimitExceeded { limit: Limit, value: usize },
    #[error("evaluation timed out")]
    Timeout,
    #[error("evaluation cancelled")]
    Cancelled,
    #[error("missing relation `{0}`")]
    MissingRelation(String),
    #[error("arithmetic error: {0}")]
    Arithmetic(String),
    #[error("internal error: {0}")]
    Internal(String),

    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function `{0}` is already registered")]
    NameCollision(String),
    #[error("unknown input slot `{0}`")]
    UnknownSlot(String),
    #[error("slot `{slot}` has no attribute `{attribute}`")]
    UnknownAttribute { slot: String, attribute: String },
    #[error("mapping for slot `{slot}` does not cover attributes: {}", missing.join(", "))]
    IncompleteMapping { slot: String, missing: Vec<String> },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` has no value")]
    MissingParam(String),
    #[error("invalid parameter: {0}")]
    ParamError(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("cycle in input: {0}")]
    CycleError(String),
}

impl Error {
    /// Stable machine-readable name for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Csv { .. } => "ParseError",
            Error::InvalidSchema(_) => "InvalidSchema",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::DuplicateColumn(_) => "DuplicateColumn",
            Error::TypeMismatch(_) => "TypeMismatch",
            Error::Syntax { .. } => "SyntaxError",
            Error::Arity { .. } => "ArityError",
            Error::Safety { .. } => "SafetyError",
            Error::DoubleAssignment { .. } => "SafetyError",
            Error::DeclConflict { .. } => "DeclConflict",
            Error::UndefinedPredicate { .. } => "UndefinedPredicate",
            Error::UnknownPredicate(_) => "UnknownPredicate",
            Error::UnstratifiableAggregate { .. } => "UnstratifiableAggregate",
            Error::AggregateConflict { .. } => "AggregateConflict",
            Error::LimitExceeded { .. } => "LimitExceeded",
            Error::Timeout => "Timeout",
            Error::Cancelled => "Cancelled",
            Error::MissingRelation(_) => "MissingRelation",
            Error::Arithmetic(_) => "ArithmeticError",
            Error::Internal(_) => "InternalError",
            Error::UnknownFunction(_) => "UnknownFunction",
            Error::NameCollision(_) => "NameCollision",
            Error::UnknownSlot(_) => "UnknownSlot",
            Error::UnknownAttribute { .. } => "UnknownAttribute",
            Error::IncompleteMapping { .. } => "IncompleteMapping",
            Error::UnknownParam(_) => "UnknownParam",
            Error::MissingParam(_) => "MissingParam",
            Error::ParamError(_) => "ParamError",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::CycleError(_) => "CycleError",
        }
    }

    /// Source position, for errors that originate in program text.
    pub fn pos(&self) -> Option<Pos> {
        match self {
            Error::Syntax { pos, .. }
            | Error::Arity { pos, .. }
            | Error::Safety { pos, .. }
            | Error::DoubleAssignment { pos, .. }
            | Error::DeclConflict { pos, .. } => Some(*pos),
            Error::UndefinedPredicate { pos, .. } => *pos,
            _ => None,
        }
    }

    /// Multi-line message with the offending source line and a caret under
    /// the reported column, when both are available.
    pub fn render(&self, source: Option<&str>, origin: Option<&str>) -> String {
        let mut out = format!("error[{}]: {self}", self.kind());
        let (Some(pos), Some(src)) = (self.pos(), source) else {
            return out;
        };
        if let Some(origin) = origin {
            out.push_str(&format!("\n --> {origin}:{pos}"));
        }
        if let Some(line) = src.lines().nth(pos.line.saturating_sub(1)) {
            let num = pos.line.to_string();
            let pad = " ".repeat(num.len());
            let indent: String = line
                .chars()
                .take(pos.column.saturating_sub(1))
                .map(|c| if c == '\t' { '\t' } else { ' ' })
                .collect();
            out.push_str(&format!("\n{pad} |\n{num} | {line}\n{pad} | {indent}^"));
        }
        out
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn type_mismatch(expected: ColumnType, found: impl fmt::Display) -> Self {
        Error::TypeMismatch(format!("expected {expected}, found {found}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
