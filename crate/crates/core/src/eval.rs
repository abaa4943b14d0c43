//! Fixpoint evaluation of compiled strata.
//!
//! Recursive strata run semi-naively: every round evaluates each recursive
//! rule once per same-stratum scan, with that scan reading only the facts
//! that were new in the previous round. `evaluate_naive` recomputes every
//! rule from the full relations each round and serves as a reference.
//!
//! Aggregate heads inside recursion come in two flavours. `min`/`max` keep a
//! running best per group: a candidate enters the relation (replacing the
//! previous value) only when it improves. `sum`/`count` in a keyed stratum
//! buffer their contributions per iteration key; once a round derives
//! nothing new, the smallest open key is closed, its aggregates are emitted
//! and evaluation continues from them.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::ast::{AggFn, ArithOp, Atom, Builtin, Term};
use crate::error::{Error, Limit, Result};
use crate::plan::{AggSpec, CExpr, ColumnMatch, PlanNode, RulePlan, StratumPlan};
use crate::relation::{Column, Relation, Schema, Tuple, Value};

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
pub const DEFAULT_MAX_ROWS: usize = 10_000_000;

#[derive(Debug, Clone)]
pub struct Limits {
    /// Rounds allowed per recursive stratum.
    pub max_iterations: usize,
    /// Derived rows allowed in total, and in any intermediate result.
    pub max_rows: usize,
    pub deadline: Option<Instant>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            max_rows: DEFAULT_MAX_ROWS,
            deadline: None,
            cancel: None,
        }
    }
}

impl Limits {
    fn check_interrupt(&self) -> Result<()> {
        if let Some(cancel) = &self.cancel {
            if cancel.load(AtomicOrdering::Relaxed) {
                return Err(Error::Cancelled);
            }
        }
        if let Some(deadline) = self.deadline {
            if Instant::now() >= deadline {
                return Err(Error::Timeout);
            }
        }
        Ok(())
    }

    fn check_rows(&self, n: usize) -> Result<()> {
        if n > self.max_rows {
            return Err(Error::LimitExceeded {
                limit: Limit::Rows,
                value: self.max_rows,
            });
        }
        Ok(())
    }
}

/// Named relations: inputs plus materialized results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    relations: BTreeMap<String, Relation>,
}

impl Database {
    pub fn new() -> Self {
        Database::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, rel: Relation) -> Option<Relation> {
        self.relations.insert(name.into(), rel)
    }

    pub fn get(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Relation> {
        self.relations.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.relations.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Relation)> {
        self.relations.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StratumStats {
    pub predicates: Vec<String>,
    pub recursive: bool,
    /// Fixpoint rounds; 0 for non-recursive strata.
    pub iterations: usize,
    /// New facts fed into each round.
    pub delta_sizes: Vec<usize>,
    /// Rows derived by rule bodies in each round, before deduplication.
    pub evaluated_rows: Vec<usize>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalStats {
    pub strata: Vec<StratumStats>,
    /// Final size of every derived relation.
    pub rows: BTreeMap<String, usize>,
    pub elapsed_ms: f64,
}

impl EvalStats {
    /// Rounds summed over recursive strata.
    pub fn iterations(&self) -> usize {
        self.strata.iter().map(|s| s.iterations).sum()
    }

    pub fn rows_produced(&self) -> usize {
        self.rows.values().sum()
    }

    /// One-line summary, optionally without wall time so output is stable.
    pub fn summary(&self, with_time: bool) -> String {
        let mut s = format!(
            "strata={} iterations={} rows={}",
            self.strata.len(),
            self.iterations(),
            self.rows_produced()
        );
        if with_time {
            s.push_str(&format!(" elapsed={:.3}ms", self.elapsed_ms));
        }
        s
    }
}

fn arith(op: ArithOp, a: Value, b: Value) -> Result<Value> {
    match (a, b) {
        (Value::Integer(x), Value::Integer(y)) => {
            let r = match op {
                ArithOp::Add => x.checked_add(y),
                ArithOp::Sub => x.checked_sub(y),
                ArithOp::Mul => x.checked_mul(y),
                ArithOp::Div => {
                    if y == 0 {
                        return Err(Error::Arithmetic("integer division by zero".into()));
                    }
                    x.checked_div(y)
                }
            };
            r.map(Value::Integer)
                .ok_or_else(|| Error::Arithmetic(format!("integer overflow in {x} {} {y}", op.symbol())))
        }
        (a, b) => {
            let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
                return Err(Error::TypeMismatch(format!(
                    "arithmetic `{}` on {a:?} and {b:?}",
                    op.symbol()
                )));
            };
            Value::double(match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => x / y,
            })
        }
    }
}

fn eval_expr(e: &CExpr, row: &[Value]) -> Result<Value> {
    match e {
        CExpr::Slot(i) => Ok(row[*i].clone()),
        CExpr::Const(v) => Ok(v.clone()),
        CExpr::Binary(op, l, r) => arith(*op, eval_expr(l, row)?, eval_expr(r, row)?),
        CExpr::Call(Builtin::Exp, a) => {
            let v = eval_expr(a, row)?;
            let x = v
                .as_f64()
                .ok_or_else(|| Error::TypeMismatch(format!("exp of {v:?}")))?;
            Value::double(x.exp())
        }
    }
}

/// Folds one group's values.
fn fold(func: AggFn, values: &[&Value]) -> Result<Value> {
    let numeric = |v: &Value| {
        if v.column_type().is_numeric() {
            Ok(())
        } else {
            Err(Error::TypeMismatch(format!("{} over {v:?}", func.name())))
        }
    };
    match func {
        AggFn::Count => Ok(Value::Integer(values.len() as i64)),
        AggFn::Sum | AggFn::Avg => {
            let mut int_sum: Option<i64> = Some(0);
            let mut float_sum = 0.0f64;
            for v in values {
                numeric(v)?;
                match (int_sum, v) {
                    (Some(acc), Value::Integer(i)) => {
                        int_sum = Some(acc.checked_add(*i).ok_or_else(|| {
                            Error::Arithmetic("integer overflow in sum".into())
                        })?);
                    }
                    _ => {
                        if let Some(acc) = int_sum.take() {
                            float_sum = acc as f64;
                        }
                        float_sum += v.as_f64().expect("numeric");
                    }
                }
            }
            match (func, int_sum) {
                (AggFn::Sum, Some(i)) => Ok(Value::Integer(i)),
                (AggFn::Sum, None) => Value::double(float_sum),
                (_, sum) => {
                    let total = sum.map(|i| i as f64).unwrap_or(float_sum);
                    Value::double(total / values.len() as f64)
                }
            }
        }
        AggFn::Min | AggFn::Max => {
            let mut best: Option<&Value> = None;
            for v in values {
                numeric(v)?;
                best = match best {
                    None => Some(v),
                    Some(b) => {
                        let ord = v.compare(b).expect("numeric values compare");
                        let better = match func {
                            AggFn::Min => ord.is_lt(),
                            _ => ord.is_gt(),
                        };
                        Some(if better { v } else { b })
                    }
                };
            }
            best.cloned()
                .ok_or_else(|| Error::Internal("aggregate over an empty group".into()))
        }
    }
}

/// Groups `rows` by the `group_by` columns and folds `value` with `func`.
///
/// Contributions are first deduplicated on group, witness and value
/// columns, so equal values coming from distinct witnesses all count. The
/// output rows are the group columns followed by the aggregate, in group
/// order.
pub fn eval_aggregate(
    rows: &[Tuple],
    group_by: &[usize],
    func: AggFn,
    witnesses: &[usize],
    value: usize,
) -> Result<Vec<Tuple>> {
    let mut groups: BTreeMap<Tuple, BTreeSet<Tuple>> = BTreeMap::new();
    for row in rows {
        let g: Tuple = group_by.iter().map(|&i| row[i].clone()).collect();
        let c: Tuple = witnesses
            .iter()
            .chain(std::iter::once(&value))
            .map(|&i| row[i].clone())
            .collect();
        groups.entry(g).or_default().insert(c);
    }
    groups
        .into_iter()
        .map(|(mut g, contribs)| {
            let values: Vec<&Value> = contribs.iter().map(|c| c.last().expect("value")).collect();
            g.push(fold(func, &values)?);
            Ok(g)
        })
        .collect()
}

/// Where scans find their rows.
struct Source<'a> {
    db: &'a Database,
    local: &'a HashMap<String, Relation>,
    /// Delta relations and the index of the scan that reads them.
    delta: Option<(&'a HashMap<String, Relation>, usize)>,
    limits: &'a Limits,
}

impl<'a> Source<'a> {
    fn relation(&self, name: &str, recursive: Option<usize>) -> Result<Option<&'a Relation>> {
        if let (Some((delta, at)), Some(i)) = (self.delta, recursive) {
            if at == i {
                return Ok(delta.get(name));
            }
        }
        if let Some(r) = self.local.get(name) {
            return Ok(Some(r));
        }
        self.db
            .get(name)
            .map(Some)
            .ok_or_else(|| Error::MissingRelation(name.to_string()))
    }
}

fn eval_node(node: &PlanNode, src: &Source<'_>) -> Result<Vec<Tuple>> {
    match node {
        PlanNode::Unit => Ok(vec![Vec::new()]),
        PlanNode::Scan {
            relation,
            columns,
            coerce,
            recursive,
            ..
        } => {
            let Some(rel) = src.relation(relation, *recursive)? else {
                return Ok(Vec::new());
            };
            let mut out = Vec::new();
            'rows: for row in rel.rows() {
                let mut bound = Vec::new();
                for (i, m) in columns.iter().enumerate() {
                    match m {
                        ColumnMatch::Bind => bound.push(match coerce[i] {
                            Some(ty) => row[i].clone().coerce(ty)?,
                            None => row[i].clone(),
                        }),
                        ColumnMatch::Const(c) if row[i] != *c => continue 'rows,
                        ColumnMatch::SameAs(j) if row[i] != row[*j] => continue 'rows,
                        _ => {}
                    }
                }
                out.push(bound);
            }
            Ok(out)
        }
        PlanNode::Join {
            left,
            right,
            keys,
            right_keep,
        } => {
            let lrows = eval_node(left, src)?;
            if lrows.is_empty() {
                return Ok(lrows);
            }
            let rrows = eval_node(right, src)?;
            let mut index: HashMap<Vec<&Value>, Vec<&Tuple>> = HashMap::new();
            for r in &rrows {
                index
                    .entry(keys.iter().map(|&(_, ri)| &r[ri]).collect())
                    .or_default()
                    .push(r);
            }
            let mut out = Vec::new();
            for l in &lrows {
                let probe: Vec<&Value> = keys.iter().map(|&(li, _)| &l[li]).collect();
                if let Some(matches) = index.get(&probe) {
                    for r in matches {
                        let mut row = l.clone();
                        row.extend(right_keep.iter().map(|&ri| r[ri].clone()));
                        out.push(row);
                    }
                    src.limits.check_rows(out.len())?;
                }
            }
            Ok(out)
        }
        PlanNode::Select { child, op, lhs, rhs } => {
            let rows = eval_node(child, src)?;
            let mut out = Vec::with_capacity(rows.len());
            for row in rows {
                let l = eval_expr(lhs, &row)?;
                let r = eval_expr(rhs, &row)?;
                let ord = l.compare(&r).ok_or_else(|| {
                    Error::TypeMismatch(format!("cannot compare {l:?} {} {r:?}", op.symbol()))
                })?;
                if op.holds(ord) {
                    out.push(row);
                }
            }
            Ok(out)
        }
        PlanNode::Compute { child, expr, ty, .. } => {
            let mut rows = eval_node(child, src)?;
            for row in &mut rows {
                let v = eval_expr(expr, row)?.coerce(*ty)?;
                row.push(v);
            }
            Ok(rows)
        }
        PlanNode::Project {
            child,
            outputs,
            types,
        } => {
            let rows = eval_node(child, src)?;
            rows.iter()
                .map(|row| {
                    outputs
                        .iter()
                        .zip(types)
                        .map(|(e, ty)| eval_expr(e, row)?.coerce(*ty))
                        .collect()
                })
                .collect()
        }
        PlanNode::Aggregate { child, spec } => {
            let rows = eval_node(child, src)?;
            Ok(
                eval_aggregate(&rows, &spec.group_by, spec.func, &spec.witnesses, spec.value)?
                    .into_iter()
                    .map(|r| spec.to_head_order(r))
                    .collect(),
            )
        }
        PlanNode::Union(children) => {
            let mut out = Vec::new();
            for c in children {
                out.extend(eval_node(c, src)?);
                src.limits.check_rows(out.len())?;
            }
            Ok(out)
        }
        PlanNode::Recursion { .. } => Err(Error::Internal(
            "recursion node evaluated as a rule body".into(),
        )),
    }
}

/// Per-predicate state for aggregate heads inside recursion.
enum AggState {
    Plain,
    Best {
        spec: AggSpec,
        best: HashMap<Tuple, Tuple>,
    },
    Keyed {
        spec: AggSpec,
        key_in_group: usize,
        seen: HashSet<(Tuple, Tuple)>,
        pending: BTreeMap<Value, BTreeMap<Tuple, BTreeSet<Tuple>>>,
        closed: HashSet<Value>,
    },
}

struct Fixpoint<'a> {
    total: HashMap<String, Relation>,
    aggs: HashMap<String, AggState>,
    key_order: &'a [String],
}

impl<'a> Fixpoint<'a> {
    fn new(plan: &'a StratumPlan, rules: &[&RulePlan], xy_key: Option<usize>) -> Result<Self> {
        let mut total = HashMap::new();
        let mut aggs = HashMap::new();
        for (pred, schema) in plan.predicates.iter().zip(&plan.schemas) {
            total.insert(pred.clone(), Relation::new(schema.clone()));
            let spec = rules
                .iter()
                .find(|r| &r.head == pred)
                .and_then(|r| r.aggregate.clone());
            let state = match spec {
                None => AggState::Plain,
                Some(spec) if spec.func.is_monotonic() => AggState::Best {
                    spec,
                    best: HashMap::new(),
                },
                Some(spec) => {
                    let key = xy_key.ok_or_else(|| Error::UnstratifiableAggregate {
                        predicate: pred.clone(),
                        reason: "no iteration key".into(),
                    })?;
                    let key_in_group = key - usize::from(spec.position < key);
                    AggState::Keyed {
                        spec,
                        key_in_group,
                        seen: HashSet::new(),
                        pending: BTreeMap::new(),
                        closed: HashSet::new(),
                    }
                }
            };
            aggs.insert(pred.clone(), state);
        }
        Ok(Fixpoint {
            total,
            aggs,
            key_order: &plan.key_order,
        })
    }

    fn rows(&self) -> usize {
        self.total.values().map(Relation::len).sum()
    }

    /// Merges derived rows into the totals; returns the rows that are new.
    fn apply(&mut self, pred: &str, rows: Vec<Tuple>) -> Result<Vec<Tuple>> {
        let total = self.total.get_mut(pred).expect("stratum predicate");
        let state = self.aggs.get_mut(pred).expect("stratum predicate");
        let mut new = Vec::new();
        match state {
            AggState::Plain => {
                for row in rows {
                    if total.insert_unchecked(row.clone()) {
                        new.push(row);
                    }
                }
            }
            AggState::Best { spec, best } => {
                let mut improved: BTreeMap<Tuple, Tuple> = BTreeMap::new();
                for row in rows {
                    let group: Tuple = spec.group_by.iter().map(|&i| row[i].clone()).collect();
                    let value = row[spec.value].clone();
                    let better = match best.get(&group) {
                        None => true,
                        Some(cur) => {
                            let ord = value.compare(&cur[spec.position]).ok_or_else(|| {
                                Error::TypeMismatch(format!("{} over {value:?}", spec.func.name()))
                            })?;
                            match spec.func {
                                AggFn::Min => ord.is_lt(),
                                _ => ord.is_gt(),
                            }
                        }
                    };
                    if better {
                        let mut head = group.clone();
                        head.push(value);
                        let head = spec.to_head_order(head);
                        if let Some(old) = best.insert(group.clone(), head.clone()) {
                            total.remove(&old);
                        }
                        total.insert_unchecked(head.clone());
                        improved.insert(group, head);
                    }
                }
                new.extend(improved.into_values());
            }
            AggState::Keyed {
                spec,
                key_in_group,
                seen,
                pending,
                closed,
            } => {
                for row in rows {
                    let group: Tuple = spec.group_by.iter().map(|&i| row[i].clone()).collect();
                    let contrib: Tuple = spec
                        .witnesses
                        .iter()
                        .chain(std::iter::once(&spec.value))
                        .map(|&i| row[i].clone())
                        .collect();
                    let key = group[*key_in_group].clone();
                    if !seen.insert((group.clone(), contrib.clone())) {
                        continue;
                    }
                    if closed.contains(&key) {
                        return Err(Error::Internal(format!(
                            "contribution to `{pred}` for iteration {key:?} after it was closed"
                        )));
                    }
                    pending
                        .entry(key)
                        .or_default()
                        .entry(group)
                        .or_default()
                        .insert(contrib);
                }
            }
        }
        Ok(new)
    }

    /// Emits the aggregates of the earliest open iteration key, for the
    /// first predicate in key order that has contributions there.
    fn close_next(&mut self) -> Result<Option<(String, Vec<Tuple>)>> {
        let min_key = self
            .aggs
            .values()
            .filter_map(|s| match s {
                AggState::Keyed { pending, .. } => pending.keys().next().cloned(),
                _ => None,
            })
            .min();
        let Some(key) = min_key else {
            return Ok(None);
        };
        let pred = self
            .key_order
            .iter()
            .chain(self.aggs.keys())
            .find(|p| {
                matches!(self.aggs.get(p.as_str()), Some(AggState::Keyed { pending, .. }) if pending.contains_key(&key))
            })
            .cloned()
            .expect("some predicate holds the minimum key");
        let total = self.total.get_mut(&pred).expect("stratum predicate");
        let Some(AggState::Keyed {
            spec,
            pending,
            closed,
            ..
        }) = self.aggs.get_mut(&pred)
        else {
            unreachable!()
        };
        let groups = pending.remove(&key).expect("pending key");
        closed.insert(key);
        let mut rows = Vec::with_capacity(groups.len());
        for (mut group, contribs) in groups {
            let values: Vec<&Value> = contribs.iter().map(|c| c.last().expect("value")).collect();
            group.push(fold(spec.func, &values)?);
            let head = spec.to_head_order(group);
            if total.insert_unchecked(head.clone()) {
                rows.push(head);
            }
        }
        Ok(Some((pred, rows)))
    }
}

fn delta_size(d: &HashMap<String, Relation>) -> usize {
    d.values().map(Relation::len).sum()
}

fn eval_recursive(
    plan: &StratumPlan,
    db: &Database,
    limits: &Limits,
    base_rows: usize,
    naive: bool,
    stats: &mut StratumStats,
) -> Result<HashMap<String, Relation>> {
    let PlanNode::Recursion {
        exit,
        recursive,
        xy_key,
        ..
    } = &plan.root
    else {
        return Err(Error::Internal("expected a recursion node".into()));
    };
    let all: Vec<&RulePlan> = exit.iter().chain(recursive).collect();
    let mut fx = Fixpoint::new(plan, &all, *xy_key)?;
    let empty = |fx: &Fixpoint<'_>| -> HashMap<String, Relation> {
        fx.total
            .iter()
            .map(|(k, r)| (k.clone(), Relation::new(r.schema().clone())))
            .collect()
    };

    let mut delta = empty(&fx);
    {
        let src = Source {
            db,
            local: &HashMap::new(),
            delta: None,
            limits,
        };
        let mut batches: Vec<(&str, Vec<Tuple>)> = Vec::new();
        for r in exit {
            batches.push((&r.head, eval_node(&r.root, &src)?));
        }
        for (head, rows) in batches {
            for row in fx.apply(head, rows)? {
                delta.get_mut(head).expect("head").insert_unchecked(row);
            }
        }
    }
    limits.check_rows(base_rows + fx.rows())?;

    loop {
        limits.check_interrupt()?;
        if stats.iterations >= limits.max_iterations {
            return Err(Error::LimitExceeded {
                limit: Limit::Iterations,
                value: limits.max_iterations,
            });
        }
        stats.iterations += 1;
        stats.delta_sizes.push(delta_size(&delta));

        let mut batches: Vec<(&str, Vec<Tuple>)> = Vec::new();
        let mut evaluated = 0;
        {
            let local = &fx.total;
            if naive {
                let src = Source {
                    db,
                    local,
                    delta: None,
                    limits,
                };
                for r in &all {
                    let rows = eval_node(&r.root, &src)?;
                    evaluated += rows.len();
                    batches.push((&r.head, rows));
                }
            } else {
                for r in recursive {
                    for i in 0..r.delta_scans {
                        let src = Source {
                            db,
                            local,
                            delta: Some((&delta, i)),
                            limits,
                        };
                        let rows = eval_node(&r.root, &src)?;
                        evaluated += rows.len();
                        batches.push((&r.head, rows));
                    }
                }
            }
        }
        stats.evaluated_rows.push(evaluated);

        let mut next = empty(&fx);
        for (head, rows) in batches {
            for row in fx.apply(head, rows)? {
                next.get_mut(head).expect("head").insert_unchecked(row);
            }
        }
        limits.check_rows(base_rows + fx.rows())?;
        delta = next;

        if delta_size(&delta) == 0 {
            match fx.close_next()? {
                Some((pred, rows)) => {
                    let d = delta.get_mut(&pred).expect("head");
                    for row in rows {
                        d.insert_unchecked(row);
                    }
                    limits.check_rows(base_rows + fx.rows())?;
                }
                None => break,
            }
        }
    }
    Ok(fx.total)
}

fn eval_plain(plan: &StratumPlan, db: &Database, limits: &Limits, stats: &mut StratumStats) -> Result<HashMap<String, Relation>> {
    let src = Source {
        db,
        local: &HashMap::new(),
        delta: None,
        limits,
    };
    let rows = eval_node(&plan.root, &src)?;
    stats.evaluated_rows.push(rows.len());
    let mut rel = Relation::new(plan.schemas[0].clone());
    for row in rows {
        rel.insert_unchecked(row);
    }
    Ok(HashMap::from([(plan.predicates[0].clone(), rel)]))
}

fn run(plans: &[StratumPlan], db: &Database, limits: &Limits, naive: bool) -> Result<(Database, EvalStats)> {
    let start = Instant::now();
    let mut db = db.clone();
    let mut stats = EvalStats::default();
    let mut derived_rows = 0;
    for plan in plans {
        limits.check_interrupt()?;
        let t0 = Instant::now();
        let mut st = StratumStats {
            predicates: plan.predicates.clone(),
            recursive: plan.recursive,
            ..Default::default()
        };
        let out = if plan.recursive {
            eval_recursive(plan, &db, limits, derived_rows, naive, &mut st)?
        } else {
            eval_plain(plan, &db, limits, &mut st)?
        };
        st.elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;
        for pred in &plan.predicates {
            let rel = out.get(pred).cloned().expect("stratum output");
            derived_rows += rel.len();
            stats.rows.insert(pred.clone(), rel.len());
            db.insert(pred.clone(), rel);
        }
        limits.check_rows(derived_rows)?;
        stats.strata.push(st);
    }
    stats.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((db, stats))
}

/// Semi-naive evaluation of every stratum, in order, over `db`.
pub fn evaluate(plans: &[StratumPlan], db: &Database, limits: &Limits) -> Result<(Database, EvalStats)> {
    run(plans, db, limits, false)
}

/// Naive evaluation: every round recomputes every rule from the full
/// relations. Produces the same database as [`evaluate`].
pub fn evaluate_naive(plans: &[StratumPlan], db: &Database, limits: &Limits) -> Result<(Database, EvalStats)> {
    run(plans, db, limits, true)
}

/// Rows of the query predicate that match the query atom's constants and
/// repeated variables. Columns are named after the query's variables where
/// it has them.
pub fn answer_query(db: &Database, query: &Atom) -> Result<Relation> {
    let rel = db
        .get(&query.predicate)
        .ok_or_else(|| Error::MissingRelation(query.predicate.clone()))?;
    let mut names: Vec<String> = Vec::new();
    let mut first: HashMap<&str, usize> = HashMap::new();
    let mut checks: Vec<(usize, Option<usize>, Option<Value>)> = Vec::new();
    for (i, (arg, col)) in query.args.iter().zip(rel.schema().columns()).enumerate() {
        let base = match arg {
            Term::Var(v) => {
                if let Some(&j) = first.get(v.name.as_str()) {
                    checks.push((i, Some(j), None));
                } else {
                    first.insert(&v.name, i);
                }
                v.name.clone()
            }
            Term::Const(c, _) => {
                checks.push((i, None, Some(c.clone().coerce(col.ty)?)));
                col.name.clone()
            }
            Term::Wildcard(_) => col.name.clone(),
        };
        let mut name = base.clone();
        let mut n = 1;
        while names.contains(&name) {
            name = format!("{base}_{n}");
            n += 1;
        }
        names.push(name);
    }
    let schema = Schema::new(
        names
            .into_iter()
            .zip(rel.schema().types())
            .map(|(n, t)| Column::new(n, t))
            .collect(),
    )?;
    let mut out = Relation::new(schema);
    for row in rel.rows() {
        let keep = checks.iter().all(|(i, same, c)| match (same, c) {
            (Some(j), _) => row[*i] == row[*j],
            (None, Some(c)) => row[*i] == *c,
            _ => true,
        });
        if keep {
            out.insert_unchecked(row.clone());
        }
    }
    Ok(out)
}
