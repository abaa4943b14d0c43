//! Dependency graph, recursion detection and stratification.
//!
//! Strata are the strongly connected components of the predicate dependency
//! graph in dependency-first order. A stratum is recursive when its component
//! has a cycle, self-loops included.
//!
//! Aggregates inside a recursive stratum are restricted: `min`/`max` are
//! always allowed (they are maintained as a running best), `avg` never is,
//! and `sum`/`count` are allowed only when the stratum is keyed by an
//! iteration argument. A stratum is keyed at argument `k` when every rule
//! that reads a same-stratum predicate binds the same variable `J` at
//! position `k` of all of those atoms and puts either `J` or `J1` with
//! `J1 = J + 1` at position `k` of its head, and the rules that keep `J`
//! unchanged form no cycle. Aggregates for key `j` are then computed over a
//! completed iteration.

use std::collections::{HashMap, HashSet};

use crate::ast::{AggFn, ArithOp, Expr, HeadArg, Literal, Program, Rule, Term};
use crate::error::{Error, Result};
use crate::relation::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Plain,
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

/// `from → to` when a rule for `from` reads `to` in its body.
#[derive(Debug, Clone, Default)]
pub struct DependencyGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

impl DependencyGraph {
    pub fn build(p: &Program) -> DependencyGraph {
        let mut g = DependencyGraph::default();
        let mut seen = HashSet::new();
        let mut add = |name: &str, nodes: &mut Vec<String>| {
            if seen.insert(name.to_string()) {
                nodes.push(name.to_string());
            }
        };
        for d in &p.decls {
            add(&d.name, &mut g.nodes);
        }
        let mut edge_set = HashSet::new();
        for r in &p.rules {
            add(&r.head.predicate, &mut g.nodes);
            let kind = if r.aggregate().is_some() {
                EdgeKind::Aggregate
            } else {
                EdgeKind::Plain
            };
            for body in r.body_predicates() {
                add(body, &mut g.nodes);
                let e = Edge {
                    from: r.head.predicate.clone(),
                    to: body.to_string(),
                    kind,
                };
                if edge_set.insert(e.clone()) {
                    g.edges.push(e);
                }
            }
        }
        if let Some(q) = &p.query {
            add(&q.predicate, &mut g.nodes);
        }
        g
    }

    fn adjacency(&self) -> (HashMap<&str, usize>, Vec<Vec<usize>>) {
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[index[e.from.as_str()]].push(index[e.to.as_str()]);
        }
        (index, adj)
    }
}

/// Tarjan's algorithm. Components come out dependency-first: a component is
/// emitted only after every component it can reach.
fn strongly_connected(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }

    fn visit(s: &mut State<'_>, v: usize) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for &w in &s.adj[v] {
            match s.index[w] {
                None => {
                    visit(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                Some(_) => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().expect("tarjan stack");
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            s.out.push(comp);
        }
    }

    let n = adj.len();
    let mut s = State {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(&mut s, v);
        }
    }
    s.out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    /// Predicates in first-appearance order.
    pub predicates: Vec<String>,
    pub recursive: bool,
    /// Iteration-key argument position when the stratum holds a recursive
    /// `sum`/`count`.
    pub xy_key: Option<usize>,
    /// For keyed strata: predicates ordered so that every predicate comes
    /// after those it reads within the same iteration.
    pub key_order: Vec<String>,
}

impl Stratum {
    pub fn contains(&self, pred: &str) -> bool {
        self.predicates.iter().any(|p| p == pred)
    }
}

#[derive(Debug, Clone)]
pub struct Stratification {
    pub strata: Vec<Stratum>,
    pub graph: DependencyGraph,
    stratum_of: HashMap<String, usize>,
}

impl Stratification {
    pub fn stratum_of(&self, pred: &str) -> Option<usize> {
        self.stratum_of.get(pred).copied()
    }

    /// The iteration key of a recursive aggregate predicate.
    pub fn xy_key(&self, pred: &str) -> Option<usize> {
        self.stratum_of(pred).and_then(|i| self.strata[i].xy_key)
    }
}

pub fn is_recursive(s: &Stratification, pred: &str) -> Result<bool> {
    s.stratum_of(pred)
        .map(|i| s.strata[i].recursive)
        .ok_or_else(|| Error::UnknownPredicate(pred.to_string()))
}

pub fn analyze(p: &Program) -> Result<Stratification> {
    let declared: HashSet<&str> = p.decls.iter().map(|d| d.name.as_str()).collect();
    let defined = p.idb_predicates();
    for r in &p.rules {
        for lit in &r.body {
            if let Literal::Positive(a) = lit {
                if !declared.contains(a.predicate.as_str()) && !defined.contains(a.predicate.as_str()) {
                    return Err(Error::UndefinedPredicate {
                        predicate: a.predicate.clone(),
                        pos: Some(a.span.pos()),
                    });
                }
            }
        }
    }
    if let Some(q) = &p.query {
        if !declared.contains(q.predicate.as_str()) && !defined.contains(q.predicate.as_str()) {
            return Err(Error::UndefinedPredicate {
                predicate: q.predicate.clone(),
                pos: Some(q.span.pos()),
            });
        }
    }
    check_aggregate_consistency(p)?;

    let graph = DependencyGraph::build(p);
    let (_, adj) = graph.adjacency();
    let mut strata = Vec::new();
    let mut stratum_of = HashMap::new();
    for comp in strongly_connected(&adj) {
        let recursive = comp.len() > 1 || adj[comp[0]].contains(&comp[0]);
        let predicates: Vec<String> = comp.iter().map(|&i| graph.nodes[i].clone()).collect();
        for pred in &predicates {
            stratum_of.insert(pred.clone(), strata.len());
        }
        let mut stratum = Stratum {
            predicates,
            recursive,
            xy_key: None,
            key_order: Vec::new(),
        };
        if recursive {
            if let Some((key, order)) = check_recursive_aggregates(p, &stratum)? {
                stratum.xy_key = Some(key);
                stratum.key_order = order;
            }
        }
        strata.push(stratum);
    }
    Ok(Stratification {
        strata,
        graph,
        stratum_of,
    })
}

/// All rules of a predicate agree on whether, where and how they aggregate.
fn check_aggregate_consistency(p: &Program) -> Result<()> {
    let mut shape: HashMap<&str, Option<(usize, AggFn)>> = HashMap::new();
    for r in &p.rules {
        let this = r.aggregate().map(|(i, a)| (i, a.func));
        match shape.get(r.head.predicate.as_str()) {
            None => {
                shape.insert(&r.head.predicate, this);
            }
            Some(prev) if *prev != this => {
                let describe = |s: &Option<(usize, AggFn)>| match s {
                    None => "no aggregate".to_string(),
                    Some((i, f)) => format!("{} at argument {i}", f.name()),
                };
                return Err(Error::AggregateConflict {
                    predicate: r.head.predicate.clone(),
                    reason: format!("{} vs {}", describe(prev), describe(&this)),
                });
            }
            Some(_) => {}
        }
    }
    Ok(())
}

fn check_recursive_aggregates(
    p: &Program,
    stratum: &Stratum,
) -> Result<Option<(usize, Vec<String>)>> {
    let rules: Vec<&Rule> = p
        .rules
        .iter()
        .filter(|r| stratum.contains(&r.head.predicate))
        .collect();
    let mut keyed = Vec::new();
    for r in &rules {
        if let Some((_, agg)) = r.aggregate() {
            match agg.func {
                AggFn::Min | AggFn::Max => {}
                AggFn::Avg => {
                    return Err(Error::UnstratifiableAggregate {
                        predicate: r.head.predicate.clone(),
                        reason: "avg is not allowed inside recursion".into(),
                    })
                }
                AggFn::Sum | AggFn::Count => keyed.push(*r),
            }
        }
    }
    if keyed.is_empty() {
        return Ok(None);
    }
    let reject = |r: &Rule, reason: String| Error::UnstratifiableAggregate {
        predicate: r.head.predicate.clone(),
        reason,
    };

    // (a) the first group-by argument is a variable carried through a
    // same-stratum body atom at the same position
    let mut key = None;
    for r in &keyed {
        let (pos, var) = r
            .head
            .args
            .iter()
            .enumerate()
            .find_map(|(i, a)| match a {
                HeadArg::Term(t) => Some((i, t)),
                HeadArg::Aggregate(_) => None,
            })
            .ok_or_else(|| reject(r, "no group-by argument to use as iteration key".into()))?;
        let Term::Var(var) = var else {
            return Err(reject(r, "iteration key must be a variable".into()));
        };
        let carried = same_stratum_atoms(r, stratum)
            .any(|a| a.args.get(pos).and_then(Term::as_var) == Some(var.name.as_str()));
        if !carried {
            return Err(reject(
                r,
                format!(
                    "key `{}` is not bound at argument {pos} of a recursive body atom",
                    var.name
                ),
            ));
        }
        match key {
            None => key = Some(pos),
            Some(k) if k != pos => {
                return Err(reject(r, format!("iteration key at argument {pos}, expected {k}")))
            }
            Some(_) => {}
        }
    }
    let key = key.expect("at least one keyed rule");

    // (b) every cycle passes through a key increment
    let mut preserving: HashMap<&str, Vec<&str>> = HashMap::new();
    for r in &rules {
        let body_keys: Vec<Option<&str>> = same_stratum_atoms(r, stratum)
            .map(|a| a.args.get(key).and_then(Term::as_var))
            .collect();
        if body_keys.is_empty() {
            continue;
        }
        let Some(Some(j)) = body_keys.first().copied() else {
            return Err(reject(r, format!("recursive atom lacks a key variable at argument {key}")));
        };
        if body_keys.iter().any(|k| *k != Some(j)) {
            return Err(reject(r, "recursive atoms disagree on the iteration key".into()));
        }
        let head_key = match r.head.args.get(key) {
            Some(HeadArg::Term(Term::Var(v))) => v.name.as_str(),
            _ => return Err(reject(r, format!("head lacks a key variable at argument {key}"))),
        };
        if head_key == j {
            for a in same_stratum_atoms(r, stratum) {
                preserving
                    .entry(r.head.predicate.as_str())
                    .or_default()
                    .push(a.predicate.as_str());
            }
        } else if !increments(r, head_key, j) {
            return Err(reject(
                r,
                format!("head key `{head_key}` is neither `{j}` nor assigned `{j} + 1`"),
            ));
        }
    }
    if has_cycle(&preserving) {
        return Err(Error::UnstratifiableAggregate {
            predicate: keyed[0].head.predicate.clone(),
            reason: "a recursive cycle does not advance the iteration key".into(),
        });
    }
    Ok(Some((key, topological(&stratum.predicates, &preserving))))
}

/// Dependencies-first order of `nodes` along an acyclic edge map.
fn topological(nodes: &[String], edges: &HashMap<&str, Vec<&str>>) -> Vec<String> {
    fn visit<'a>(
        n: &'a str,
        edges: &HashMap<&'a str, Vec<&'a str>>,
        done: &mut HashSet<&'a str>,
        out: &mut Vec<String>,
    ) {
        if !done.insert(n) {
            return;
        }
        for &m in edges.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            visit(m, edges, done, out);
        }
        out.push(n.to_string());
    }
    let mut done = HashSet::new();
    let mut out = Vec::new();
    for n in nodes {
        visit(n, edges, &mut done, &mut out);
    }
    out
}

fn same_stratum_atoms<'a>(
    r: &'a Rule,
    stratum: &'a Stratum,
) -> impl Iterator<Item = &'a crate::ast::Atom> + 'a {
    r.body.iter().filter_map(move |l| match l {
        Literal::Positive(a) if stratum.contains(&a.predicate) => Some(a),
        _ => None,
    })
}

/// `head = j + 1` (either operand order) appears in the body.
fn increments(r: &Rule, head: &str, j: &str) -> bool {
    let is_j = |e: &Expr| matches!(e, Expr::Term(Term::Var(v)) if v.name == j);
    let is_one = |e: &Expr| matches!(e, Expr::Term(Term::Const(Value::Integer(1), _)));
    r.body.iter().any(|l| match l {
        Literal::Assign {
            var,
            expr: Expr::Binary {
                op: ArithOp::Add,
                lhs,
                rhs,
            },
            ..
        } if var.name == head => (is_j(lhs) && is_one(rhs)) || (is_one(lhs) && is_j(rhs)),
        _ => false,
    })
}

fn has_cycle(edges: &HashMap<&str, Vec<&str>>) -> bool {
    fn dfs<'a>(
        n: &'a str,
        edges: &HashMap<&'a str, Vec<&'a str>>,
        state: &mut HashMap<&'a str, u8>,
    ) -> bool {
        match state.get(n) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        state.insert(n, 1);
        for &m in edges.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            if dfs(m, edges, state) {
                return true;
            }
        }
        state.insert(n, 2);
        false
    }
    let mut state = HashMap::new();
    edges.keys().any(|n| dfs(n, edges, &mut state))
}
