//! Batch execution behind `llib run`, kept apart from argument parsing so
//! it can be driven from tests.

use std::io::Write;
use std::path::{Path, PathBuf};

use llib_core::{format_table, parse_program, write_csv, Error, Limits, Session};

pub const EXIT_OK: i32 = 0;
pub const EXIT_EVAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Exit status for an error: problems with the program text or its inputs
/// are usage errors, everything raised while evaluating is an evaluation
/// error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::Csv { .. }
        | Error::InvalidSchema(_)
        | Error::UnknownColumn(_)
        | Error::DuplicateColumn(_)
        | Error::Syntax { .. }
        | Error::Arity { .. }
        | Error::Safety { .. }
        | Error::DoubleAssignment { .. }
        | Error::DeclConflict { .. }
        | Error::UndefinedPredicate { .. }
        | Error::UnknownPredicate(_)
        | Error::UnstratifiableAggregate { .. }
        | Error::AggregateConflict { .. }
        | Error::MissingRelation(_)
        | Error::SchemaMismatch(_) => EXIT_INPUT,
        _ => EXIT_EVAL,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub program: PathBuf,
    /// Relation name and CSV path pairs.
    pub bindings: Vec<(String, PathBuf)>,
    pub out: Option<PathBuf>,
    pub max_iterations: Option<usize>,
    pub max_rows: Option<usize>,
    pub deterministic: bool,
}

/// Splits `name=path`.
pub fn parse_binding(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected NAME=PATH, got `{s}`")),
    }
}

fn render(e: &Error, source: Option<&str>, path: &Path) -> String {
    e.render(source, Some(&path.display().to_string()))
}

/// Runs a program file; returns the process exit status.
pub fn run_file(opts: &RunOptions, stdout: &mut impl Write, stderr: &mut impl Write) -> i32 {
    let text = match std::fs::read_to_string(&opts.program) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(stderr, "error[IoError]: cannot read {}: {e}", opts.program.display());
            return EXIT_INPUT;
        }
    };
    let fail = |stderr: &mut dyn Write, e: Error| {
        let _ = writeln!(stderr, "{}", render(&e, Some(&text), &opts.program));
        exit_code(&e)
    };
    let program = match parse_program(&text) {
        Ok(p) => p,
        Err(e) => return fail(stderr, e),
    };
    let mut limits = Limits::default();
    if let Some(n) = opts.max_iterations {
        limits.max_iterations = n;
    }
    if let Some(n) = opts.max_rows {
        limits.max_rows = n;
    }
    let mut session = llib_core::build_session("llib", Some(limits));
    for (name, path) in &opts.bindings {
        let Some(decl) = program.decl(name) else {
            let _ = writeln!(
                stderr,
                "error[UsageError]: `{name}` is bound but not declared in {}",
                opts.program.display()
            );
            return EXIT_INPUT;
        };
        if let Err(e) = session.load_csv(name, path, &decl.schema) {
            let _ = writeln!(stderr, "{}", e.render(None, None));
            return exit_code(&e);
        }
    }
    let outcome = match session.run_program(&program) {
        Ok(o) => o,
        Err(e) => return fail(stderr, e),
    };
    if let Some(answer) = &outcome.answer {
        match &opts.out {
            Some(path) => {
                if let Err(e) = write_csv(answer, path) {
                    let _ = writeln!(stderr, "{}", e.render(None, None));
                    return exit_code(&e);
                }
            }
            None => {
                let _ = write!(stdout, "{}", format_table(answer));
            }
        }
    }
    let _ = writeln!(stdout, "{}", outcome.stats.summary(!opts.deterministic));
    EXIT_OK
}

/// Canonical formatting of a program file.
pub fn format_file(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("error[IoError]: cannot read {}: {e}", path.display()))?;
    parse_program(&text)
        .map(|p| llib_core::format_program(&p))
        .map_err(|e| render(&e, Some(&text), path))
}

/// Session used by the interactive loop.
pub fn repl_session(max_iterations: Option<usize>) -> Session {
    let mut limits = Limits::default();
    if let Some(n) = max_iterations {
        limits.max_iterations = n;
    }
    llib_core::build_session("repl", Some(limits))
}
