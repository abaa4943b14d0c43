//! Lexer and recursive-descent parser for the Datalog dialect, followed by
//! the program-level checks (arity, safety, declaration conflicts).
//!
//! ```text
//! database({ arc(From: integer, To: integer) }).
//! tc(From, To) <- arc(From, To).
//! tc(From, To) <- tc(From, Tmp), arc(Tmp, To).
//! query tc(From, To).
//! ```

use std::collections::{HashMap, HashSet};

use crate::ast::*;
use crate::error::{Error, Pos, Result};
use crate::relation::{Column, ColumnType, Schema, Value};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LIdent(String),
    UIdent(String),
    Underscore,
    Int(String),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Colon,
    Arrow,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::LIdent(s) | Tok::UIdent(s) => format!("`{s}`"),
            Tok::Underscore => "`_`".into(),
            Tok::Int(s) => format!("`{s}`"),
            Tok::Float(f) => format!("`{f:?}`"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", punct(other)),
        }
    }
}

fn punct(t: &Tok) -> &'static str {
    match t {
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBrace => "{",
        Tok::RBrace => "}",
        Tok::Comma => ",",
        Tok::Dot => ".",
        Tok::Colon => ":",
        Tok::Arrow => "<-",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        Tok::EqEq => "==",
        Tok::Ne => "!=",
        Tok::Assign => "=",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Slash => "/",
        _ => "?",
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.char_indices().peekable(),
            src,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map(|&(i, _)| i).unwrap_or(self.src.len())
    }

    fn error(&self, pos: Pos, expected: &str, found: String) -> Error {
        Error::Syntax {
            pos,
            expected: vec![expected.to_string()],
            found,
        }
    }

    fn tokenize(mut self) -> Result<Vec<(Tok, Pos)>> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '%' {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let pos = Pos::new(self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, pos));
                return Ok(out);
            };
            let tok = match c {
                'a'..='z' | 'A'..='Z' => {
                    let start = self.offset();
                    while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                        self.bump();
                    }
                    let word = self.src[start..self.offset()].to_string();
                    if c.is_ascii_lowercase() {
                        Tok::LIdent(word)
                    } else {
                        Tok::UIdent(word)
                    }
                }
                '_' => {
                    self.bump();
                    if matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                        return Err(self.error(pos, "`_` or a variable", "`_` followed by a name".into()));
                    }
                    Tok::Underscore
                }
                '0'..='9' => self.number(pos)?,
                '"' => self.string(pos)?,
                _ => {
                    self.bump();
                    let next = self.peek();
                    let two = |t: Tok, lx: &mut Self| {
                        lx.bump();
                        t
                    };
                    match (c, next) {
                        ('(', _) => Tok::LParen,
                        (')', _) => Tok::RParen,
                        ('{', _) => Tok::LBrace,
                        ('}', _) => Tok::RBrace,
                        (',', _) => Tok::Comma,
                        ('.', _) => Tok::Dot,
                        (':', Some('-')) => two(Tok::Arrow, &mut self),
                        (':', _) => Tok::Colon,
                        ('<', Some('-')) => two(Tok::Arrow, &mut self),
                        ('<', Some('=')) => two(Tok::Le, &mut self),
                        ('<', _) => Tok::Lt,
                        ('>', Some('=')) => two(Tok::Ge, &mut self),
                        ('>', _) => Tok::Gt,
                        ('=', Some('=')) => two(Tok::EqEq, &mut self),
                        ('=', _) => Tok::Assign,
                        ('!', Some('=')) => two(Tok::Ne, &mut self),
                        ('+', _) => Tok::Plus,
                        ('-', _) => Tok::Minus,
                        ('*', _) => Tok::Star,
                        ('/', _) => Tok::Slash,
                        (c, _) => {
                            return Err(self.error(pos, "a token", format!("character {c:?}")))
                        }
                    }
                }
            };
            out.push((tok, pos));
        }
    }

    fn number(&mut self, pos: Pos) -> Result<Tok> {
        let start = self.offset();
        let digits = |lx: &mut Self| {
            while matches!(lx.peek(), Some(c) if c.is_ascii_digit()) {
                lx.bump();
            }
        };
        digits(self);
        let mut float = false;
        if self.peek() == Some('.') && matches!(self.peek2(), Some(c) if c.is_ascii_digit()) {
            float = true;
            self.bump();
            digits(self);
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let after = self.peek2();
            let exp_ok = match after {
                Some(c) if c.is_ascii_digit() => true,
                Some('+' | '-') => {
                    let mut it = self.chars.clone();
                    it.next();
                    it.next();
                    matches!(it.next(), Some((_, c)) if c.is_ascii_digit())
                }
                _ => false,
            };
            if exp_ok {
                float = true;
                self.bump();
                if matches!(self.peek(), Some('+' | '-')) {
                    self.bump();
                }
                digits(self);
            }
        }
        let text = &self.src[start..self.offset()];
        if float {
            let v: f64 = text
                .parse()
                .map_err(|_| self.error(pos, "a number", format!("`{text}`")))?;
            if !v.is_finite() {
                return Err(self.error(pos, "a finite number", format!("`{text}`")));
            }
            Ok(Tok::Float(v))
        } else {
            Ok(Tok::Int(text.to_string()))
        }
    }

    fn string(&mut self, pos: Pos) -> Result<Tok> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error(pos, "closing `\"`", "end of input".into())),
                Some('"') => return Ok(Tok::Str(s)),
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('r') => s.push('\r'),
                    other => {
                        return Err(self.error(
                            pos,
                            "a valid escape",
                            format!("`\\{}`", other.map(String::from).unwrap_or_default()),
                        ))
                    }
                },
                Some(c) => s.push(c),
            }
        }
    }
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.at + n).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn advance(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> Error {
        Error::Syntax {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Pos> {
        if *self.peek() == tok {
            Ok(self.advance().1)
        } else {
            Err(self.unexpected(&[&format!("`{}`", punct(&tok))]))
        }
    }

    fn lident(&mut self) -> Result<(String, Pos)> {
        match self.peek().clone() {
            Tok::LIdent(s) => Ok((s, self.advance().1)),
            _ => Err(self.unexpected(&["a predicate name"])),
        }
    }

    fn uident(&mut self) -> Result<Var> {
        match self.peek().clone() {
            Tok::UIdent(s) => {
                let pos = self.advance().1;
                Ok(Var {
                    name: s,
                    span: Span(pos),
                })
            }
            _ => Err(self.unexpected(&["a variable"])),
        }
    }

    fn program(&mut self) -> Result<Program> {
        let mut prog = Program::default();
        loop {
            match self.peek() {
                Tok::Eof => return Ok(prog),
                Tok::LIdent(w)
                    if w == "database"
                        && *self.peek_at(1) == Tok::LParen
                        && *self.peek_at(2) == Tok::LBrace =>
                {
                    self.decls(&mut prog.decls)?
                }
                Tok::LIdent(w) if w == "query" && matches!(self.peek_at(1), Tok::LIdent(_)) => {
                    if prog.query.is_some() {
                        return Err(Error::Syntax {
                            pos: self.pos(),
                            expected: vec!["a rule".into(), "a declaration".into()],
                            found: "a second query directive".into(),
                        });
                    }
                    self.advance();
                    let atom = self.body_atom()?;
                    self.expect(Tok::Dot)?;
                    prog.query = Some(atom);
                }
                Tok::LIdent(_) => prog.rules.push(self.rule()?),
                _ => return Err(self.unexpected(&["a rule", "a declaration", "`query`", "end of input"])),
            }
        }
    }

    fn decls(&mut self, out: &mut Vec<Decl>) -> Result<()> {
        self.advance();
        self.expect(Tok::LParen)?;
        self.expect(Tok::LBrace)?;
        loop {
            let (name, pos) = self.lident()?;
            self.expect(Tok::LParen)?;
            let mut columns = Vec::new();
            let mut seen = HashSet::new();
            loop {
                let col = self.uident()?;
                self.expect(Tok::Colon)?;
                let ty = match self.peek() {
                    Tok::LIdent(t) if t == "integer" => ColumnType::Integer,
                    Tok::LIdent(t) if t == "double" => ColumnType::Double,
                    Tok::LIdent(t) if t == "string" => ColumnType::String,
                    _ => return Err(self.unexpected(&["`integer`", "`double`", "`string`"])),
                };
                self.advance();
                if !seen.insert(col.name.clone()) {
                    return Err(Error::Syntax {
                        pos: col.span.pos(),
                        expected: vec!["a distinct column name".into()],
                        found: format!("duplicate column `{}`", col.name),
                    });
                }
                columns.push(Column::new(col.name, ty));
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
            self.expect(Tok::RParen)?;
            out.push(Decl {
                name,
                schema: Schema::new(columns)?,
                span: Span(pos),
            });
            if *self.peek() == Tok::Comma {
                self.advance();
            } else {
                break;
            }
        }
        self.expect(Tok::RBrace)?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Dot)?;
        Ok(())
    }

    fn rule(&mut self) -> Result<Rule> {
        let head = self.head_atom()?;
        let mut body = Vec::new();
        if *self.peek() == Tok::Arrow {
            self.advance();
            loop {
                body.push(self.literal()?);
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
            self.expect(Tok::Dot)?;
        } else if *self.peek() == Tok::Dot {
            self.advance();
        } else {
            return Err(self.unexpected(&["`<-`", "`:-`", "`.`"]));
        }
        let span = head.span;
        Ok(Rule { head, body, span })
    }

    fn head_atom(&mut self) -> Result<HeadAtom> {
        let (predicate, pos) = self.lident()?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        let mut seen_agg = false;
        loop {
            let agg = match self.peek() {
                Tok::LIdent(name) if *self.peek_at(1) == Tok::Lt => AggFn::from_name(name),
                _ => None,
            };
            if let Some(func) = agg {
                if seen_agg {
                    return Err(Error::Syntax {
                        pos: self.pos(),
                        expected: vec!["a term".into()],
                        found: "a second aggregate in one head".into(),
                    });
                }
                seen_agg = true;
                let span = Span(self.advance().1);
                self.advance();
                let mut vars = vec![self.uident()?];
                while *self.peek() == Tok::Comma {
                    self.advance();
                    vars.push(self.uident()?);
                }
                self.expect(Tok::Gt)?;
                let value = vars.pop().expect("at least one variable");
                args.push(HeadArg::Aggregate(AggregateTerm {
                    func,
                    witnesses: vars,
                    value,
                    span,
                }));
            } else {
                args.push(HeadArg::Term(self.term(true)?));
            }
            if *self.peek() == Tok::Comma {
                self.advance();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(Atom {
            predicate,
            args,
            span: Span(pos),
        })
    }

    fn body_atom(&mut self) -> Result<Atom> {
        let (predicate, pos) = self.lident()?;
        self.expect(Tok::LParen)?;
        let mut args = vec![self.term(true)?];
        while *self.peek() == Tok::Comma {
            self.advance();
            args.push(self.term(true)?);
        }
        self.expect(Tok::RParen)?;
        Ok(Atom {
            predicate,
            args,
            span: Span(pos),
        })
    }

    fn term(&mut self, allow_wildcard: bool) -> Result<Term> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::UIdent(name) => {
                self.advance();
                Ok(Term::Var(Var {
                    name,
                    span: Span(pos),
                }))
            }
            Tok::Underscore if allow_wildcard => {
                self.advance();
                Ok(Term::Wildcard(Span(pos)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Term::Const(Value::text(s), Span(pos)))
            }
            Tok::Int(_) | Tok::Float(_) => self.number(false),
            Tok::Minus if matches!(self.peek_at(1), Tok::Int(_) | Tok::Float(_)) => {
                self.advance();
                self.number(true).map(|t| match t {
                    Term::Const(v, _) => Term::Const(v, Span(pos)),
                    other => other,
                })
            }
            _ => {
                let mut expected = vec!["a variable", "a constant"];
                if allow_wildcard {
                    expected.push("`_`");
                }
                Err(self.unexpected(&expected))
            }
        }
    }

    fn number(&mut self, negative: bool) -> Result<Term> {
        let (tok, pos) = self.advance();
        let value = match tok {
            Tok::Int(digits) => {
                let text = if negative { format!("-{digits}") } else { digits };
                text.parse::<i64>().map(Value::Integer).map_err(|_| Error::Syntax {
                    pos,
                    expected: vec!["a 64-bit integer".into()],
                    found: format!("`{text}`"),
                })?
            }
            Tok::Float(f) => Value::double(if negative { -f } else { f })?,
            _ => unreachable!("caller checked for a number token"),
        };
        Ok(Term::Const(value, Span(pos)))
    }

    fn literal(&mut self) -> Result<Literal> {
        let pos = self.pos();
        match self.peek() {
            Tok::LIdent(name) if Builtin::from_name(name).is_none() => {
                Ok(Literal::Positive(self.body_atom()?))
            }
            Tok::UIdent(_) if *self.peek_at(1) == Tok::Assign => {
                let var = self.uident()?;
                self.advance();
                let expr = self.expr()?;
                Ok(Literal::Assign {
                    var,
                    expr,
                    span: Span(pos),
                })
            }
            _ => {
                let lhs = self.expr()?;
                let op = match self.peek() {
                    Tok::Lt => CmpOp::Lt,
                    Tok::Le => CmpOp::Le,
                    Tok::Gt => CmpOp::Gt,
                    Tok::Ge => CmpOp::Ge,
                    Tok::EqEq => CmpOp::Eq,
                    Tok::Ne => CmpOp::Ne,
                    _ => {
                        return Err(self.unexpected(&[
                            "`<`", "`<=`", "`>`", "`>=`", "`==`", "`!=`", "`=`", "an operator",
                        ]))
                    }
                };
                self.advance();
                let rhs = self.expr()?;
                Ok(Literal::Compare {
                    op,
                    lhs,
                    rhs,
                    span: Span(pos),
                })
            }
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.product()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.primary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.primary()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::LIdent(name) => match Builtin::from_name(&name) {
                Some(func) => {
                    let span = Span(self.advance().1);
                    self.expect(Tok::LParen)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Call {
                        func,
                        arg: Box::new(arg),
                        span,
                    })
                }
                None => Err(self.unexpected(&["a variable", "a constant", "`(`"])),
            },
            _ => Ok(Expr::Term(self.term(false)?)),
        }
    }
}

/// Parses program text and runs the program-level checks.
pub fn parse_program(text: &str) -> Result<Program> {
    let program = parse_unchecked(text)?;
    check_program(&program)?;
    Ok(program)
}

/// Parses without the arity/safety/declaration checks.
pub fn parse_unchecked(text: &str) -> Result<Program> {
    let toks = Lexer::new(text).tokenize()?;
    Parser { toks, at: 0 }.program()
}

/// Parses a single relation declaration such as `arc(From: integer, To: integer)`.
pub fn parse_relation_decl(text: &str) -> Result<Decl> {
    let toks = Lexer::new(&format!("database({{{text}}}).")).tokenize()?;
    let mut parser = Parser { toks, at: 0 };
    let mut prog = parser.program()?;
    if prog.decls.len() != 1 || !prog.rules.is_empty() || prog.query.is_some() {
        return Err(Error::Syntax {
            pos: Pos::new(1, 1),
            expected: vec!["one relation declaration".into()],
            found: text.to_string(),
        });
    }
    Ok(prog.decls.remove(0))
}

/// Arity consistency, declaration conflicts and rule safety.
pub fn check_program(p: &Program) -> Result<()> {
    let mut arities: HashMap<&str, usize> = HashMap::new();
    let mut declared = HashSet::new();
    for d in &p.decls {
        if !declared.insert(d.name.as_str()) {
            return Err(Error::DeclConflict {
                predicate: d.name.clone(),
                pos: d.span.pos(),
            });
        }
    }
    let atoms = p
        .decls
        .iter()
        .map(|d| (d.name.as_str(), d.schema.arity(), d.span.pos()))
        .chain(p.rules.iter().flat_map(|r| {
            std::iter::once((r.head.predicate.as_str(), r.head.args.len(), r.head.span.pos()))
                .chain(r.body.iter().filter_map(|l| match l {
                    Literal::Positive(a) => Some((a.predicate.as_str(), a.args.len(), a.span.pos())),
                    _ => None,
                }))
        }))
        .chain(
            p.query
                .iter()
                .map(|q| (q.predicate.as_str(), q.args.len(), q.span.pos())),
        );
    for (pred, n, pos) in atoms {
        let expected = *arities.entry(pred).or_insert(n);
        if expected != n {
            return Err(Error::Arity {
                predicate: pred.to_string(),
                expected,
                found: n,
                pos,
            });
        }
    }

    for r in &p.rules {
        if declared.contains(r.head.predicate.as_str()) {
            return Err(Error::DeclConflict {
                predicate: r.head.predicate.clone(),
                pos: r.head.span.pos(),
            });
        }
        check_rule_safety(r)?;
    }
    Ok(())
}

/// Every head variable (aggregate witnesses and value included), every
/// comparison variable and every assignment input must be bound by a
/// positive body atom or by a safe assignment.
pub fn check_rule_safety(r: &Rule) -> Result<()> {
    let mut bound: HashSet<&str> = HashSet::new();
    let mut assigned: HashSet<&str> = HashSet::new();
    for lit in &r.body {
        match lit {
            Literal::Positive(a) => {
                bound.extend(a.args.iter().filter_map(Term::as_var));
            }
            Literal::Assign { var, .. } => {
                if !assigned.insert(&var.name) {
                    return Err(Error::DoubleAssignment {
                        variable: var.name.clone(),
                        pos: var.span.pos(),
                    });
                }
            }
            Literal::Compare { .. } => {}
        }
    }
    loop {
        let mut changed = false;
        for lit in &r.body {
            if let Literal::Assign { var, expr, .. } = lit {
                if !bound.contains(var.name.as_str())
                    && expr.vars().iter().all(|v| bound.contains(v.name.as_str()))
                {
                    bound.insert(&var.name);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let unsafe_var = |v: &Var| Error::Safety {
        variable: v.name.clone(),
        pos: v.span.pos(),
    };
    for lit in &r.body {
        let exprs: Vec<&Expr> = match lit {
            Literal::Compare { lhs, rhs, .. } => vec![lhs, rhs],
            Literal::Assign { expr, .. } => vec![expr],
            Literal::Positive(_) => continue,
        };
        for e in exprs {
            if let Some(v) = e.vars().into_iter().find(|v| !bound.contains(v.name.as_str())) {
                return Err(unsafe_var(v));
            }
        }
    }
    for arg in &r.head.args {
        match arg {
            HeadArg::Term(Term::Var(v)) if !bound.contains(v.name.as_str()) => {
                return Err(unsafe_var(v))
            }
            HeadArg::Term(Term::Wildcard(s)) => {
                return Err(Error::Safety {
                    variable: "_".into(),
                    pos: s.pos(),
                })
            }
            HeadArg::Aggregate(agg) => {
                for v in agg.witnesses.iter().chain(std::iter::once(&agg.value)) {
                    if !bound.contains(v.name.as_str()) {
                        return Err(unsafe_var(v));
                    }
                }
            }
            HeadArg::Term(_) => {}
        }
    }
    Ok(())
}
