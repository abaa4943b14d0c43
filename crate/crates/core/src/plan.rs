//! Compilation of a stratified program into operator trees.
//!
//! Each rule body becomes a left-deep chain of scans and hash joins in body
//! order, with comparisons and assignments placed as soon as their inputs
//! are bound. Rows flowing through a body carry one value per bound
//! variable; the rule's `Project` turns them into head tuples.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::analyze::Stratification;
use crate::ast::{
    AggFn, ArithOp, Builtin, CmpOp, Expr, HeadArg, Literal, Program, Rule, Term,
};
use crate::error::{Error, Result};
use crate::relation::{Column, ColumnType, Schema, Value};

/// An expression over the slots of a body row.
#[derive(Debug, Clone, PartialEq)]
pub enum CExpr {
    Slot(usize),
    Const(Value),
    Binary(ArithOp, Box<CExpr>, Box<CExpr>),
    Call(Builtin, Box<CExpr>),
}

/// How a scanned column participates in the atom.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnMatch {
    /// Binds a fresh variable; emitted in the scan's output.
    Bind,
    /// Must equal a constant.
    Const(Value),
    /// Must equal an earlier column of the same atom.
    SameAs(usize),
    Ignore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggSpec {
    pub func: AggFn,
    pub group_by: Vec<usize>,
    pub witnesses: Vec<usize>,
    pub value: usize,
    /// Head position of the aggregate column.
    pub position: usize,
}

impl AggSpec {
    /// Reorders `group ++ [agg]` into head argument order.
    pub fn to_head_order(&self, mut row: Vec<Value>) -> Vec<Value> {
        let agg = row.pop().expect("aggregate value");
        row.insert(self.position, agg);
        row
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanNode {
    /// A single empty row; the input of bodies without atoms.
    Unit,
    Scan {
        relation: String,
        columns: Vec<ColumnMatch>,
        /// Conversion applied to each bound column.
        coerce: Vec<Option<ColumnType>>,
        vars: Vec<String>,
        /// Index among the rule's same-stratum scans, for delta substitution.
        recursive: Option<usize>,
    },
    Join {
        left: Box<PlanNode>,
        right: Box<PlanNode>,
        /// `(left slot, right slot)` equality pairs.
        keys: Vec<(usize, usize)>,
        /// Right slots appended to each left row.
        right_keep: Vec<usize>,
    },
    Select {
        child: Box<PlanNode>,
        op: CmpOp,
        lhs: CExpr,
        rhs: CExpr,
    },
    Compute {
        child: Box<PlanNode>,
        var: String,
        expr: CExpr,
        ty: ColumnType,
    },
    Project {
        child: Box<PlanNode>,
        outputs: Vec<CExpr>,
        types: Vec<ColumnType>,
    },
    Aggregate {
        child: Box<PlanNode>,
        spec: AggSpec,
    },
    Union(Vec<PlanNode>),
    Recursion {
        exit: Vec<RulePlan>,
        recursive: Vec<RulePlan>,
        outputs: Vec<String>,
        xy_key: Option<usize>,
    },
}

/// One compiled rule: `root` is a `Project` producing head tuples, or, for
/// aggregate heads, `group ++ witnesses ++ [value]` contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct RulePlan {
    pub head: String,
    pub root: PlanNode,
    pub aggregate: Option<AggSpec>,
    /// Number of same-stratum scans in the body.
    pub delta_scans: usize,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumPlan {
    pub predicates: Vec<String>,
    pub schemas: Vec<Schema>,
    pub recursive: bool,
    pub root: PlanNode,
    /// For keyed strata: predicates in the order their per-key aggregates
    /// must be closed.
    pub key_order: Vec<String>,
}

impl StratumPlan {
    pub fn schema_of(&self, pred: &str) -> Option<&Schema> {
        self.predicates
            .iter()
            .position(|p| p == pred)
            .map(|i| &self.schemas[i])
    }
}

type ColTypes = Vec<Option<ColumnType>>;

fn join_type(a: Option<ColumnType>, b: Option<ColumnType>, ctx: &dyn Fn() -> String) -> Result<Option<ColumnType>> {
    use ColumnType::*;
    Ok(match (a, b) {
        (None, t) | (t, None) => t,
        (Some(x), Some(y)) if x == y => Some(x),
        (Some(Integer), Some(Double)) | (Some(Double), Some(Integer)) => Some(Double),
        (Some(x), Some(y)) => {
            return Err(Error::TypeMismatch(format!("{}: {x} vs {y}", ctx())))
        }
    })
}

fn expr_type(e: &Expr, vars: &HashMap<String, Option<ColumnType>>, rule: &Rule) -> Result<Option<ColumnType>> {
    let ctx = || format!("in rule `{rule}`");
    Ok(match e {
        Expr::Term(Term::Var(v)) => vars.get(&v.name).copied().flatten(),
        Expr::Term(Term::Const(c, _)) => Some(c.column_type()),
        Expr::Term(Term::Wildcard(_)) => None,
        Expr::Call { arg, .. } => {
            if expr_type(arg, vars, rule)? == Some(ColumnType::String) {
                return Err(Error::TypeMismatch(format!("function of text {}", ctx())));
            }
            Some(ColumnType::Double)
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = expr_type(lhs, vars, rule)?;
            let r = expr_type(rhs, vars, rule)?;
            if l == Some(ColumnType::String) || r == Some(ColumnType::String) {
                return Err(Error::TypeMismatch(format!(
                    "arithmetic `{}` on text {}",
                    op.symbol(),
                    ctx()
                )));
            }
            match (l, r) {
                (Some(ColumnType::Double), _) | (_, Some(ColumnType::Double)) => Some(ColumnType::Double),
                (Some(ColumnType::Integer), Some(ColumnType::Integer)) => Some(ColumnType::Integer),
                _ => None,
            }
        }
    })
}

/// Variable types for one rule given the current predicate column types.
fn rule_var_types(
    rule: &Rule,
    preds: &HashMap<String, ColTypes>,
) -> Result<HashMap<String, Option<ColumnType>>> {
    let mut vars: HashMap<String, Option<ColumnType>> = HashMap::new();
    let ctx = || format!("in rule `{rule}`");
    for lit in &rule.body {
        if let Literal::Positive(a) = lit {
            let cols = preds.get(&a.predicate);
            for (i, t) in a.args.iter().enumerate() {
                if let Term::Var(v) = t {
                    let ty = cols.and_then(|c| c.get(i).copied().flatten());
                    let cur = vars.get(&v.name).copied().flatten();
                    vars.insert(v.name.clone(), join_type(cur, ty, &ctx)?);
                } else if let Term::Const(c, _) = t {
                    let ty = cols.and_then(|c| c.get(i).copied().flatten());
                    join_type(Some(c.column_type()), ty, &ctx)?;
                }
            }
        }
    }
    // assignments may chain; iterate to a fixpoint
    for _ in 0..=rule.body.len() {
        let mut changed = false;
        for lit in &rule.body {
            if let Literal::Assign { var, expr, .. } = lit {
                let ty = expr_type(expr, &vars, rule)?;
                let cur = vars.get(&var.name).copied().flatten();
                let joined = join_type(cur, ty, &ctx)?;
                if joined != cur {
                    vars.insert(var.name.clone(), joined);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for lit in &rule.body {
        if let Literal::Compare { lhs, rhs, op, .. } = lit {
            let l = expr_type(lhs, &vars, rule)?;
            let r = expr_type(rhs, &vars, rule)?;
            if let (Some(l), Some(r)) = (l, r) {
                if l.is_numeric() != r.is_numeric() {
                    return Err(Error::TypeMismatch(format!(
                        "comparison `{}` between {l} and {r} {}",
                        op.symbol(),
                        ctx()
                    )));
                }
            }
        }
    }
    Ok(vars)
}

fn head_types(rule: &Rule, vars: &HashMap<String, Option<ColumnType>>) -> Result<ColTypes> {
    rule.head
        .args
        .iter()
        .map(|a| match a {
            HeadArg::Term(Term::Var(v)) => Ok(vars.get(&v.name).copied().flatten()),
            HeadArg::Term(Term::Const(c, _)) => Ok(Some(c.column_type())),
            HeadArg::Term(Term::Wildcard(_)) => Ok(None),
            HeadArg::Aggregate(agg) => {
                let vt = vars.get(&agg.value.name).copied().flatten();
                match agg.func {
                    AggFn::Count => Ok(Some(ColumnType::Integer)),
                    _ if vt == Some(ColumnType::String) => Err(Error::TypeMismatch(format!(
                        "{} over text in rule `{rule}`",
                        agg.func.name()
                    ))),
                    AggFn::Avg => Ok(Some(ColumnType::Double)),
                    _ => Ok(vt),
                }
            }
        })
        .collect()
}

/// Infers column types of every predicate. Declared relations keep their
/// declared types; a derived column is Double as soon as any contribution
/// is Double, Text when fed from text, and Integer otherwise.
pub fn infer_types(p: &Program) -> Result<HashMap<String, Schema>> {
    let mut preds: HashMap<String, ColTypes> = HashMap::new();
    for d in &p.decls {
        preds.insert(d.name.clone(), d.schema.types().map(Some).collect());
    }
    for r in &p.rules {
        preds
            .entry(r.head.predicate.clone())
            .or_insert_with(|| vec![None; r.head.args.len()]);
    }
    let max_rounds = 2 + preds.values().map(Vec::len).sum::<usize>() * 2;
    for _ in 0..max_rounds {
        let mut changed = false;
        for r in &p.rules {
            let vars = rule_var_types(r, &preds)?;
            let heads = head_types(r, &vars)?;
            let cur = preds.get_mut(&r.head.predicate).expect("head registered");
            for (slot, ty) in cur.iter_mut().zip(heads) {
                let joined = join_type(*slot, ty, &|| {
                    format!("column of `{}` in rule `{r}`", r.head.predicate)
                })?;
                if joined != *slot {
                    *slot = joined;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = HashMap::new();
    for d in &p.decls {
        out.insert(d.name.clone(), d.schema.clone());
    }
    for (pred, types) in preds {
        if out.contains_key(&pred) {
            continue;
        }
        let first = p.rules_for(&pred).next().expect("IDB predicate has a rule");
        let names = head_column_names(first);
        let columns = names
            .into_iter()
            .zip(types)
            .map(|(n, t)| Column::new(n, t.unwrap_or(ColumnType::Integer)))
            .collect();
        out.insert(pred, Schema::new(columns)?);
    }
    Ok(out)
}

fn head_column_names(rule: &Rule) -> Vec<String> {
    let mut used = HashSet::new();
    rule.head
        .args
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let base = match a {
                HeadArg::Term(Term::Var(v)) => v.name.clone(),
                HeadArg::Aggregate(agg) => agg.value.name.clone(),
                HeadArg::Term(_) => format!("c{i}"),
            };
            let mut name = base.clone();
            let mut n = 1;
            while !used.insert(name.clone()) {
                name = format!("{base}_{n}");
                n += 1;
            }
            name
        })
        .collect()
}

struct RuleCompiler<'a> {
    rule: &'a Rule,
    vars: HashMap<String, Option<ColumnType>>,
    schemas: &'a HashMap<String, Schema>,
    stratum: &'a HashSet<&'a str>,
    layout: Vec<String>,
    recursive_scans: usize,
}

impl RuleCompiler<'_> {
    fn var_type(&self, name: &str) -> ColumnType {
        self.vars
            .get(name)
            .copied()
            .flatten()
            .unwrap_or(ColumnType::Integer)
    }

    fn slot(&self, name: &str) -> Option<usize> {
        self.layout.iter().position(|v| v == name)
    }

    fn expr(&self, e: &Expr) -> Result<CExpr> {
        Ok(match e {
            Expr::Term(Term::Var(v)) => CExpr::Slot(self.slot(&v.name).ok_or_else(|| {
                Error::Internal(format!("variable `{}` used before it is bound", v.name))
            })?),
            Expr::Term(Term::Const(c, _)) => CExpr::Const(c.clone()),
            Expr::Term(Term::Wildcard(s)) => {
                return Err(Error::Safety {
                    variable: "_".into(),
                    pos: s.pos(),
                })
            }
            Expr::Binary { op, lhs, rhs } => {
                CExpr::Binary(*op, Box::new(self.expr(lhs)?), Box::new(self.expr(rhs)?))
            }
            Expr::Call { func, arg, .. } => CExpr::Call(*func, Box::new(self.expr(arg)?)),
        })
    }

    fn ready(&self, e: &Expr) -> bool {
        e.vars().iter().all(|v| self.slot(&v.name).is_some())
    }

    fn scan(&mut self, atom: &crate::ast::Atom) -> Result<PlanNode> {
        let schema = self
            .schemas
            .get(&atom.predicate)
            .ok_or_else(|| Error::Internal(format!("unresolved predicate `{}`", atom.predicate)))?;
        let mut columns = Vec::new();
        let mut coerce = Vec::new();
        let mut vars: Vec<String> = Vec::new();
        let mut first_col: HashMap<&str, usize> = HashMap::new();
        for (i, t) in atom.args.iter().enumerate() {
            let col_ty = schema.columns()[i].ty;
            match t {
                Term::Var(v) => {
                    if let Some(&j) = first_col.get(v.name.as_str()) {
                        columns.push(ColumnMatch::SameAs(j));
                        coerce.push(None);
                    } else {
                        first_col.insert(&v.name, i);
                        columns.push(ColumnMatch::Bind);
                        let want = self.var_type(&v.name);
                        coerce.push((want != col_ty).then_some(want));
                        vars.push(v.name.clone());
                    }
                }
                Term::Const(c, _) => {
                    columns.push(ColumnMatch::Const(c.clone().coerce(col_ty).map_err(|_| {
                        Error::TypeMismatch(format!(
                            "constant {c:?} in `{atom}` does not fit column {} ({col_ty})",
                            schema.columns()[i].name
                        ))
                    })?));
                    coerce.push(None);
                }
                Term::Wildcard(_) => {
                    columns.push(ColumnMatch::Ignore);
                    coerce.push(None);
                }
            }
        }
        let recursive = if self.stratum.contains(atom.predicate.as_str()) {
            self.recursive_scans += 1;
            Some(self.recursive_scans - 1)
        } else {
            None
        };
        Ok(PlanNode::Scan {
            relation: atom.predicate.clone(),
            columns,
            coerce,
            vars,
            recursive,
        })
    }

    fn compile(mut self) -> Result<RulePlan> {
        let rule = self.rule;
        let mut pending: Vec<&Literal> = Vec::new();
        let mut current: Option<PlanNode> = None;
        for lit in &rule.body {
            match lit {
                Literal::Positive(atom) => {
                    let scan = self.scan(atom)?;
                    let PlanNode::Scan { vars, .. } = &scan else { unreachable!() };
                    let scan_vars = vars.clone();
                    current = Some(match current.take() {
                        None => {
                            self.layout = scan_vars;
                            scan
                        }
                        Some(left) => {
                            let mut keys = Vec::new();
                            let mut right_keep = Vec::new();
                            for (ri, v) in scan_vars.iter().enumerate() {
                                match self.slot(v) {
                                    Some(li) => keys.push((li, ri)),
                                    None => right_keep.push(ri),
                                }
                            }
                            for &ri in &right_keep {
                                self.layout.push(scan_vars[ri].clone());
                            }
                            PlanNode::Join {
                                left: Box::new(left),
                                right: Box::new(scan),
                                keys,
                                right_keep,
                            }
                        }
                    });
                    current = Some(self.flush(current.take().unwrap(), &mut pending)?);
                }
                other => pending.push(other),
            }
        }
        let node = self.flush(current.unwrap_or(PlanNode::Unit), &mut pending)?;
        if let Some(lit) = pending.first() {
            return Err(Error::Internal(format!("literal `{lit}` never became evaluable")));
        }

        let head_schema = &self.schemas[&rule.head.predicate];
        let mut outputs = Vec::new();
        let mut types = Vec::new();
        let mut aggregate = None;
        let mut agg_parts = None;
        for (i, arg) in rule.head.args.iter().enumerate() {
            let col_ty = head_schema.columns()[i].ty;
            match arg {
                HeadArg::Term(t) => {
                    outputs.push(self.expr(&Expr::Term(t.clone()))?);
                    types.push(col_ty);
                }
                HeadArg::Aggregate(agg) => agg_parts = Some((i, agg, col_ty)),
            }
        }
        if let Some((position, agg, col_ty)) = agg_parts {
            let group = outputs.len();
            for w in &agg.witnesses {
                outputs.push(self.expr(&Expr::Term(Term::Var(w.clone())))?);
                types.push(self.var_type(&w.name));
            }
            outputs.push(self.expr(&Expr::Term(Term::Var(agg.value.clone())))?);
            types.push(match agg.func {
                AggFn::Count => self.var_type(&agg.value.name),
                _ => col_ty,
            });
            aggregate = Some(AggSpec {
                func: agg.func,
                group_by: (0..group).collect(),
                witnesses: (group..group + agg.witnesses.len()).collect(),
                value: group + agg.witnesses.len(),
                position,
            });
        }
        Ok(RulePlan {
            head: rule.head.predicate.clone(),
            root: PlanNode::Project {
                child: Box::new(node),
                outputs,
                types,
            },
            aggregate,
            delta_scans: self.recursive_scans,
            source: rule.to_string(),
        })
    }

    /// Places every pending comparison/assignment whose inputs are bound.
    fn flush<'r>(&mut self, mut node: PlanNode, pending: &mut Vec<&'r Literal>) -> Result<PlanNode> {
        loop {
            let Some(idx) = pending.iter().position(|lit| match lit {
                Literal::Compare { lhs, rhs, .. } => self.ready(lhs) && self.ready(rhs),
                Literal::Assign { expr, .. } => self.ready(expr),
                Literal::Positive(_) => false,
            }) else {
                return Ok(node);
            };
            node = match pending.remove(idx) {
                Literal::Compare { op, lhs, rhs, .. } => PlanNode::Select {
                    child: Box::new(node),
                    op: *op,
                    lhs: self.expr(lhs)?,
                    rhs: self.expr(rhs)?,
                },
                Literal::Assign { var, expr, .. } => match self.slot(&var.name) {
                    Some(s) => PlanNode::Select {
                        child: Box::new(node),
                        op: CmpOp::Eq,
                        lhs: CExpr::Slot(s),
                        rhs: self.expr(expr)?,
                    },
                    None => {
                        let compiled = self.expr(expr)?;
                        self.layout.push(var.name.clone());
                        PlanNode::Compute {
                            child: Box::new(node),
                            var: var.name.clone(),
                            expr: compiled,
                            ty: self.var_type(&var.name),
                        }
                    }
                },
                Literal::Positive(_) => unreachable!(),
            };
        }
    }
}

fn compile_rule(
    rule: &Rule,
    schemas: &HashMap<String, Schema>,
    stratum: &HashSet<&str>,
) -> Result<RulePlan> {
    let pred_types: HashMap<String, ColTypes> = schemas
        .iter()
        .map(|(k, s)| (k.clone(), s.types().map(Some).collect()))
        .collect();
    let vars = rule_var_types(rule, &pred_types)?;
    RuleCompiler {
        rule,
        vars,
        schemas,
        stratum,
        layout: Vec::new(),
        recursive_scans: 0,
    }
    .compile()
}

/// Compiles every stratum that has rules, in dependency order.
pub fn compile(p: &Program, s: &Stratification) -> Result<Vec<StratumPlan>> {
    let schemas = infer_types(p)?;
    let mut plans = Vec::new();
    for stratum in &s.strata {
        let rules: Vec<&Rule> = p
            .rules
            .iter()
            .filter(|r| stratum.contains(&r.head.predicate))
            .collect();
        if rules.is_empty() {
            continue;
        }
        let members: HashSet<&str> = stratum.predicates.iter().map(String::as_str).collect();
        let mut exit = Vec::new();
        let mut recursive = Vec::new();
        for r in rules {
            let plan = compile_rule(r, &schemas, &members)?;
            if plan.delta_scans == 0 {
                exit.push(plan);
            } else {
                recursive.push(plan);
            }
        }
        let predicates: Vec<String> = stratum
            .predicates
            .iter()
            .filter(|pr| p.rules_for(pr).next().is_some())
            .cloned()
            .collect();
        let stratum_schemas = predicates.iter().map(|pr| schemas[pr].clone()).collect();
        let root = if stratum.recursive {
            PlanNode::Recursion {
                exit,
                recursive,
                outputs: predicates.clone(),
                xy_key: stratum.xy_key,
            }
        } else {
            debug_assert!(recursive.is_empty());
            let aggregate = exit[0].aggregate.clone();
            let union = PlanNode::Union(exit.into_iter().map(|r| r.root).collect());
            match aggregate {
                Some(spec) => PlanNode::Aggregate {
                    child: Box::new(union),
                    spec,
                },
                None => union,
            }
        };
        plans.push(StratumPlan {
            predicates,
            schemas: stratum_schemas,
            recursive: stratum.recursive,
            root,
            key_order: stratum.key_order.clone(),
        });
    }
    Ok(plans)
}

impl fmt::Display for CExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CExpr::Slot(i) => write!(f, "${i}"),
            CExpr::Const(v) => write!(f, "{v:?}"),
            CExpr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            CExpr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl PlanNode {
    fn fmt_indent(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self {
            PlanNode::Unit => writeln!(f, "{pad}Unit"),
            PlanNode::Scan {
                relation,
                vars,
                recursive,
                ..
            } => {
                let tag = if recursive.is_some() { " [recursive]" } else { "" };
                writeln!(f, "{pad}Scan({relation}) -> [{}]{tag}", vars.join(", "))
            }
            PlanNode::Join {
                left, right, keys, ..
            } => {
                let keys: Vec<String> = keys.iter().map(|(l, r)| format!("${l}=${r}")).collect();
                writeln!(f, "{pad}Join [{}]", keys.join(", "))?;
                left.fmt_indent(f, depth + 1)?;
                right.fmt_indent(f, depth + 1)
            }
            PlanNode::Select { child, op, lhs, rhs } => {
                writeln!(f, "{pad}Select {lhs} {} {rhs}", op.symbol())?;
                child.fmt_indent(f, depth + 1)
            }
            PlanNode::Compute { child, var, expr, .. } => {
                writeln!(f, "{pad}Compute {var} = {expr}")?;
                child.fmt_indent(f, depth + 1)
            }
            PlanNode::Project { child, outputs, .. } => {
                let outs: Vec<String> = outputs.iter().map(ToString::to_string).collect();
                writeln!(f, "{pad}Project [{}]", outs.join(", "))?;
                child.fmt_indent(f, depth + 1)
            }
            PlanNode::Aggregate { child, spec } => {
                writeln!(
                    f,
                    "{pad}Aggregate {} group={:?} witnesses={:?} value=${}",
                    spec.func.name(),
                    spec.group_by,
                    spec.witnesses,
                    spec.value
                )?;
                child.fmt_indent(f, depth + 1)
            }
            PlanNode::Union(children) => {
                writeln!(f, "{pad}Union")?;
                children.iter().try_for_each(|c| c.fmt_indent(f, depth + 1))
            }
            PlanNode::Recursion {
                exit,
                recursive,
                outputs,
                xy_key,
            } => {
                write!(f, "{pad}Recursion [{}]", outputs.join(", "))?;
                if let Some(k) = xy_key {
                    write!(f, " key=#{k}")?;
                }
                writeln!(f)?;
                for (label, rules) in [("exit", exit), ("recursive", recursive)] {
                    for r in rules {
                        writeln!(f, "{pad}  {label} {}: {}", r.head, r.source)?;
                        r.root.fmt_indent(f, depth + 2)?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for PlanNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indent(f, 0)
    }
}
