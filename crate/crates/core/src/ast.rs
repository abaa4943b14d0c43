//! Abstract syntax for Datalog programs, and the canonical pretty-printer.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::Pos;
use crate::relation::{Schema, Value};

/// Source position attached to AST nodes.
///
/// Two spans always compare equal, so `==` on AST nodes is structural.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span(pub Pos);

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Span {
    pub fn pos(self) -> Pos {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Var {
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(Var),
    Const(Value, Span),
    Wildcard(Span),
}

impl Term {
    pub fn span(&self) -> Span {
        match self {
            Term::Var(v) => v.span,
            Term::Const(_, s) | Term::Wildcard(s) => *s,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(&v.name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// Built-in scalar functions usable inside expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Exp,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        match name {
            "exp" => Some(Builtin::Exp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Exp => "exp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Term(Term),
    Binary {
        op: ArithOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Builtin,
        arg: Box<Expr>,
        span: Span,
    },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Term(t) => t.span(),
            Expr::Binary { lhs, .. } => lhs.span(),
            Expr::Call { span, .. } => *span,
        }
    }

    /// Variables referenced by the expression, in order of appearance.
    pub fn vars(&self) -> Vec<&Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a Var>) {
        match self {
            Expr::Term(Term::Var(v)) => out.push(v),
            Expr::Term(_) => {}
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Expr::Call { arg, .. } => arg.collect_vars(out),
        }
    }

    /// Wildcards are not allowed in expressions; returns the first one.
    pub fn find_wildcard(&self) -> Option<Span> {
        match self {
            Expr::Term(Term::Wildcard(s)) => Some(*s),
            Expr::Term(_) => None,
            Expr::Binary { lhs, rhs, .. } => lhs.find_wildcard().or_else(|| rhs.find_wildcard()),
            Expr::Call { arg, .. } => arg.find_wildcard(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggFn {
    Sum,
    Count,
    Min,
    Max,
    Avg,
}

impl AggFn {
    pub fn from_name(name: &str) -> Option<AggFn> {
        match name {
            "sum" => Some(AggFn::Sum),
            "count" => Some(AggFn::Count),
            "min" => Some(AggFn::Min),
            "max" => Some(AggFn::Max),
            "avg" => Some(AggFn::Avg),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AggFn::Sum => "sum",
            AggFn::Count => "count",
            AggFn::Min => "min",
            AggFn::Max => "max",
            AggFn::Avg => "avg",
        }
    }

    /// min and max can be maintained as a running best inside recursion.
    pub fn is_monotonic(self) -> bool {
        matches!(self, AggFn::Min | AggFn::Max)
    }
}

/// `fn<W1, ..., Wk, V>` in a rule head: witnesses `W*` individuate
/// contributions, `V` is the aggregated value.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTerm {
    pub func: AggFn,
    pub witnesses: Vec<Var>,
    pub value: Var,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadArg {
    Term(Term),
    Aggregate(AggregateTerm),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom<A = Term> {
    pub predicate: String,
    pub args: Vec<A>,
    pub span: Span,
}

pub type HeadAtom = Atom<HeadArg>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Positive(Atom),
    Compare {
        op: CmpOp,
        lhs: Expr,
        rhs: Expr,
        span: Span,
    },
    Assign {
        var: Var,
        expr: Expr,
        span: Span,
    },
}

impl Literal {
    pub fn span(&self) -> Span {
        match self {
            Literal::Positive(a) => a.span,
            Literal::Compare { span, .. } | Literal::Assign { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub head: HeadAtom,
    pub body: Vec<Literal>,
    pub span: Span,
}

impl Rule {
    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    /// The head's aggregate term and its argument position, if any.
    pub fn aggregate(&self) -> Option<(usize, &AggregateTerm)> {
        self.head.args.iter().enumerate().find_map(|(i, a)| match a {
            HeadArg::Aggregate(agg) => Some((i, agg)),
            HeadArg::Term(_) => None,
        })
    }

    /// Predicates of positive body atoms, in body order.
    pub fn body_predicates(&self) -> impl Iterator<Item = &str> {
        self.body.iter().filter_map(|l| match l {
            Literal::Positive(a) => Some(a.predicate.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub name: String,
    pub schema: Schema,
    pub span: Span,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub rules: Vec<Rule>,
    pub query: Option<Atom>,
}

impl Program {
    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.decls.iter().find(|d| d.name == name)
    }

    /// Predicates defined by at least one rule.
    pub fn idb_predicates(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.head.predicate.as_str()).collect()
    }

    pub fn rules_for<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| r.head.predicate == pred)
    }
}

pub(crate) fn write_literal_value(out: &mut impl fmt::Write, v: &Value) -> fmt::Result {
    match v {
        Value::Integer(i) => write!(out, "{i}"),
        Value::Double(d) => write!(out, "{d:?}"),
        Value::Text(s) => {
            out.write_char('"')?;
            for c in s.chars() {
                match c {
                    '"' => out.write_str("\\\"")?,
                    '\\' => out.write_str("\\\\")?,
                    '\n' => out.write_str("\\n")?,
                    '\t' => out.write_str("\\t")?,
                    '\r' => out.write_str("\\r")?,
                    c => out.write_char(c)?,
                }
            }
            out.write_char('"')
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => v.fmt(f),
            Term::Const(c, _) => write_literal_value(f, c),
            Term::Wildcard(_) => f.write_str("_"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Term(t) => t.fmt(f),
            Expr::Call { func, arg, .. } => write!(f, "{}({arg})", func.name()),
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                if lhs.precedence() < p {
                    write!(f, "({lhs})")?;
                } else {
                    write!(f, "{lhs}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if rhs.precedence() <= p {
                    write!(f, "({rhs})")
                } else {
                    write!(f, "{rhs}")
                }
            }
        }
    }
}

impl fmt::Display for AggregateTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<", self.func.name())?;
        for w in &self.witnesses {
            write!(f, "{w}, ")?;
        }
        write!(f, "{}>", self.value)
    }
}

impl fmt::Display for HeadArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadArg::Term(t) => t.fmt(f),
            HeadArg::Aggregate(a) => a.fmt(f),
        }
    }
}

impl<A: fmt::Display> fmt::Display for Atom<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            a.fmt(f)?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Positive(a) => a.fmt(f),
            Literal::Compare { op, lhs, rhs, .. } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Literal::Assign { var, expr, .. } => write!(f, "{var} = {expr}"),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.head.fmt(f)?;
        for (i, lit) in self.body.iter().enumerate() {
            f.write_str(if i == 0 { " <- " } else { ", " })?;
            lit.fmt(f)?;
        }
        f.write_str(".")
    }
}

impl fmt::Display for Decl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, c) in self.schema.columns().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", c.name, c.ty)?;
        }
        f.write_str(")")
    }
}

/// Canonical text for a program: one `database` block, then one rule per
/// line, then the query. Re-parses to an equal AST.
pub fn format_program(p: &Program) -> String {
    let mut lines = Vec::new();
    if !p.decls.is_empty() {
        let body = p
            .decls
            .iter()
            .map(|d| format!("  {d}"))
            .collect::<Vec<_>>()
            .join(",\n");
        lines.push(format!("database({{\n{body}\n}})."));
    }
    lines.extend(p.rules.iter().map(|r| r.to_string()));
    if let Some(q) = &p.query {
        lines.push(format!("query {q}."));
    }
    lines.join("\n")
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_program(self))
    }
}
