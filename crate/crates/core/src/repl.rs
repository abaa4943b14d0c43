//! Line-oriented interactive front end over a [`Session`].
//!
//! Statements may span lines and end with `.`. Declarations and rules
//! accumulate; a `query` statement evaluates everything entered so far.
//! Lines starting with `.` are meta-commands.

use std::fmt::Write as _;

use crate::analyze::analyze;
use crate::ast::{format_program, Program};
use crate::error::{Error, Result};
use crate::parser::{check_program, parse_relation_decl, parse_unchecked};
use crate::session::{format_table, Session};

pub const HELP: &str = "\
statements end with `.`; rules and facts accumulate, `query p(X, Y).` evaluates
.load NAME PATH SCHEMA   load a CSV file, SCHEMA like name(Col: integer, ...)
.funcs                   list library functions
.stats                   statistics of past evaluations
.program                 show the accumulated program
.reset                   forget rules, facts and loaded relations
.quit                    leave";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reply {
    pub output: String,
    pub quit: bool,
}

impl Reply {
    fn text(s: impl Into<String>) -> Reply {
        Reply {
            output: s.into(),
            quit: false,
        }
    }
}

pub struct Repl {
    session: Session,
    program: Program,
    buffer: String,
    /// Omit wall-clock times from output.
    pub deterministic: bool,
}

impl Repl {
    pub fn new(session: Session) -> Repl {
        Repl {
            session,
            program: Program::default(),
            buffer: String::new(),
            deterministic: false,
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }

    /// Declarations and rules entered so far.
    pub fn program(&self) -> &Program {
        &self.program
    }

    /// True while a statement is incomplete.
    pub fn pending(&self) -> bool {
        !self.buffer.trim().is_empty()
    }

    pub fn prompt(&self) -> &'static str {
        if self.pending() {
            "   ...> "
        } else {
            "llib> "
        }
    }

    pub fn handle_line(&mut self, line: &str) -> Reply {
        let trimmed = line.trim();
        if !self.pending() && trimmed.starts_with('.') {
            return self.meta(trimmed);
        }
        if !self.buffer.is_empty() {
            self.buffer.push('\n');
        }
        self.buffer.push_str(line);
        if !statement_complete(&self.buffer) {
            return Reply::default();
        }
        let text = std::mem::take(&mut self.buffer);
        match self.statement(&text) {
            Ok(out) => Reply::text(out),
            Err(e) => Reply::text(e.render(Some(&text), None)),
        }
    }

    fn statement(&mut self, text: &str) -> Result<String> {
        let parsed = parse_unchecked(text)?;
        let mut merged = self.program.clone();
        merged.decls.extend(parsed.decls.iter().cloned());
        merged.rules.extend(parsed.rules.iter().cloned());
        merged.query = None;
        check_program(&merged)?;
        let mut probe = merged.clone();
        self.session.complete_declarations(&mut probe);
        match analyze(&probe) {
            Ok(_) | Err(Error::UndefinedPredicate { .. }) => {}
            Err(e) => return Err(e),
        }
        let Some(query) = parsed.query else {
            let added = parsed.decls.len() + parsed.rules.len();
            self.program = merged;
            return Ok(format!("ok ({added} added)"));
        };
        let mut run = merged.clone();
        run.query = Some(query);
        let outcome = self.session.run_program(&run)?;
        self.program = merged;
        let mut out = format_table(outcome.answer.as_ref().expect("query answer"));
        out.push_str(&outcome.stats.summary(!self.deterministic));
        Ok(out)
    }

    fn meta(&mut self, line: &str) -> Reply {
        let mut parts = line.splitn(2, char::is_whitespace);
        let cmd = parts.next().unwrap_or_default();
        let rest = parts.next().unwrap_or_default().trim();
        match cmd {
            ".quit" | ".exit" => Reply {
                output: String::new(),
                quit: true,
            },
            ".help" => Reply::text(HELP),
            ".funcs" => {
                let mut out = String::new();
                for f in self.session.functions().describe() {
                    let slots: Vec<String> = f
                        .slots
                        .iter()
                        .map(|s| {
                            let attrs: Vec<&str> = s.attributes.iter().map(|a| a.name.as_str()).collect();
                            format!("{}({})", s.name, attrs.join(", "))
                        })
                        .collect();
                    let params: Vec<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
                    let _ = write!(out, "{:<20} {}", f.name, slots.join(" "));
                    if !params.is_empty() {
                        let _ = write!(out, "  params: {}", params.join(", "));
                    }
                    out.push('\n');
                }
                Reply::text(out.trim_end())
            }
            ".stats" => {
                let log = self.session.stats_log();
                if log.is_empty() {
                    return Reply::text("no evaluations yet");
                }
                let mut out = String::new();
                for (i, s) in log.iter().enumerate() {
                    let _ = writeln!(out, "#{} {}", i + 1, s.summary(!self.deterministic));
                    for st in &s.strata {
                        let _ = writeln!(
                            out,
                            "    [{}] {} iterations={} deltas={:?}",
                            st.predicates.join(", "),
                            if st.recursive { "recursive" } else { "flat" },
                            st.iterations,
                            st.delta_sizes
                        );
                    }
                }
                Reply::text(out.trim_end())
            }
            ".program" => Reply::text(format_program(&self.program)),
            ".reset" => {
                self.program = Program::default();
                self.session.reset();
                Reply::text("reset")
            }
            ".load" => match self.load(rest) {
                Ok(out) => Reply::text(out),
                Err(e) => Reply::text(e.render(None, None)),
            },
            other => Reply::text(format!("unknown command `{other}`; try .help")),
        }
    }

    fn load(&mut self, args: &str) -> Result<String> {
        let usage = || Error::Syntax {
            pos: crate::error::Pos::new(1, 1),
            expected: vec![".load NAME PATH SCHEMA".into()],
            found: args.to_string(),
        };
        let mut parts = args.splitn(3, char::is_whitespace);
        let (Some(name), Some(path), Some(schema)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(usage());
        };
        let schema = schema.trim();
        let decl_text = if schema.starts_with('(') {
            format!("{name}{schema}")
        } else {
            schema.to_string()
        };
        let decl = parse_relation_decl(&decl_text)?;
        let n = self.session.load_csv(name, path, &decl.schema)?;
        Ok(format!("loaded {n} rows into {name}{}", decl.schema))
    }
}

/// A statement is complete when its last significant character, outside
/// strings and comments, is a `.`.
fn statement_complete(text: &str) -> bool {
    let mut last = None;
    let mut in_string = false;
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if in_string {
            match c {
                '\\' => {
                    chars.next();
                }
                '"' => {
                    in_string = false;
                    last = Some('"');
                }
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '%' => {
                for n in chars.by_ref() {
                    if n == '\n' {
                        break;
                    }
                }
            }
            c if c.is_whitespace() => {}
            c => last = Some(c),
        }
    }
    !in_string && last == Some('.')
}
