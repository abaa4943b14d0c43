//! Acceptance criteria, checked against oracles written here and not
//! shared with the engine. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::AtomicBool;
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value as Json};

use llib_core::library::{Catalog, LINREG_BGD};
use llib_core::{
    analyze, compile, evaluate, evaluate_naive, format_program, parse_program, ColumnType, Database, Error, Limit,
    Limits, Relation, Schema, Session, StratumStats, Value,
};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn main() {
    let criteria: Vec<(&str, fn() -> Check)> = vec![
        ("parser", parser),
        ("tc-oracle", tc_oracle),
        ("semi-naive-equals-naive", semi_naive_equals_naive),
        ("cc-and-sssp-oracles", cc_and_sssp),
        ("mlm-oracle", mlm_oracle),
        ("bgd", bgd),
        ("aggregates-in-recursion", aggregates_in_recursion),
        ("robustness", robustness),
        ("service", service),
    ];
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.2}s]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason} [{secs:.2}s]");
            }
        }
    }
    panic::set_hook(hook);
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn d(x: f64) -> Value {
    Value::double(x).unwrap()
}

fn int_pairs(cols: (&str, &str), edges: &[(i64, i64)]) -> Relation {
    Relation::from_rows(
        Schema::of(&[(cols.0, ColumnType::Integer), (cols.1, ColumnType::Integer)]).unwrap(),
        edges.iter().map(|&(a, b)| vec![a.into(), b.into()]),
    )
    .unwrap()
}

fn pair_set(rel: &Relation) -> BTreeSet<(i64, i64)> {
    rel.rows()
        .map(|r| (r[0].as_i64().unwrap(), r[1].as_i64().unwrap()))
        .collect()
}

// ---------------------------------------------------------------- parser

const TC_PROGRAM: &str = "database({
arc(From: integer, To: integer)
}).
tc(From,To)<- arc(From,To).
tc(From,To) <- tc(From,Tmp), arc(Tmp,To).
query tc(From, To).";

struct ProgramGen<'a> {
    rng: &'a mut StdRng,
}

impl ProgramGen<'_> {
    fn string_literal(&mut self) -> String {
        let raw = ["a", "x y", "q\"uote", "back\\slash", "", "tab\there", "ünï"]
            .choose(self.rng)
            .unwrap();
        let mut out = String::from("\"");
        for c in raw.chars() {
            match c {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                '\t' => out.push_str("\\t"),
                c => out.push(c),
            }
        }
        out.push('"');
        out
    }

    fn constant(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 => self.rng.gen_range(-50i64..50).to_string(),
            1 => format!("{:?}", [0.5, 1e-7, 2.5e10, 3.0, -0.25, 123.456].choose(self.rng).unwrap()),
            2 => self.string_literal(),
            _ => self.rng.gen_range(0i64..5).to_string(),
        }
    }

    fn expr(&mut self, vars: &[String], depth: u32) -> String {
        if depth == 0 || self.rng.gen_bool(0.4) {
            return if !vars.is_empty() && self.rng.gen_bool(0.7) {
                vars.choose(self.rng).unwrap().clone()
            } else {
                self.rng.gen_range(-9i64..10).to_string()
            };
        }
        match self.rng.gen_range(0..5) {
            0 => format!("exp({})", self.expr(vars, depth - 1)),
            1 => format!("({})", self.expr(vars, depth - 1)),
            _ => {
                let op = ["+", "-", "*", "/"].choose(self.rng).unwrap();
                format!("{} {op} {}", self.expr(vars, depth - 1), self.expr(vars, depth - 1))
            }
        }
    }

    fn generate(&mut self) -> String {
        const VARS: [&str; 5] = ["X", "Y", "Z", "W", "Acc"];
        let types = ["integer", "double", "string"];
        let mut preds: Vec<(String, usize)> = Vec::new();
        let mut out = String::new();
        let n_edb = self.rng.gen_range(1..=3);
        let mut decls = Vec::new();
        for i in 0..n_edb {
            let arity = self.rng.gen_range(1..=3);
            let cols: Vec<String> = (0..arity)
                .map(|c| format!("C{c}: {}", types.choose(self.rng).unwrap()))
                .collect();
            decls.push(format!("e{i}({})", cols.join(", ")));
            preds.push((format!("e{i}"), arity));
        }
        out.push_str(&format!("database({{ {} }}).\n", decls.join(", ")));
        let idb: Vec<(String, usize)> = (0..self.rng.gen_range(1..=4))
            .map(|i| (format!("q{i}"), self.rng.gen_range(1..=3)))
            .collect();
        for _ in 0..self.rng.gen_range(1..=6) {
            let (head, arity) = idb.choose(self.rng).unwrap().clone();
            let mut body = Vec::new();
            let mut bound: Vec<String> = Vec::new();
            let fact = self.rng.gen_bool(0.15);
            if !fact {
                for _ in 0..self.rng.gen_range(1..=3) {
                    let (p, a) = preds.iter().chain(&idb).collect::<Vec<_>>().choose(self.rng).cloned().unwrap().clone();
                    let args: Vec<String> = (0..a)
                        .map(|_| match self.rng.gen_range(0..6) {
                            0 => "_".to_string(),
                            1 => self.constant(),
                            _ => {
                                let v = VARS.choose(self.rng).unwrap().to_string();
                                if !bound.contains(&v) {
                                    bound.push(v.clone());
                                }
                                v
                            }
                        })
                        .collect();
                    body.push(format!("{p}({})", args.join(", ")));
                }
                if !bound.is_empty() && self.rng.gen_bool(0.4) {
                    let e = self.expr(&bound, 3);
                    body.push(format!("R = {e}"));
                    bound.push("R".into());
                }
                if !bound.is_empty() && self.rng.gen_bool(0.4) {
                    let op = ["<", "<=", ">", ">=", "==", "!="].choose(self.rng).unwrap();
                    let (l, r) = (self.expr(&bound, 2), self.expr(&bound, 2));
                    body.push(format!("{l} {op} {r}"));
                }
            }
            let agg_at = (!bound.is_empty() && self.rng.gen_bool(0.3)).then(|| self.rng.gen_range(0..arity));
            let head_args: Vec<String> = (0..arity)
                .map(|i| {
                    if Some(i) == agg_at {
                        let f = ["sum", "count", "min", "max", "avg"].choose(self.rng).unwrap();
                        let mut inner: Vec<String> = (0..self.rng.gen_range(0..=2))
                            .map(|_| bound.choose(self.rng).unwrap().clone())
                            .collect();
                        inner.push(bound.choose(self.rng).unwrap().clone());
                        format!("{f}<{}>", inner.join(", "))
                    } else if !bound.is_empty() && self.rng.gen_bool(0.8) {
                        bound.choose(self.rng).unwrap().clone()
                    } else {
                        self.constant()
                    }
                })
                .collect();
            let arrow = if self.rng.gen_bool(0.5) { "<-" } else { ":-" };
            if body.is_empty() {
                out.push_str(&format!("{head}({}).\n", head_args.join(", ")));
            } else {
                out.push_str(&format!("{head}({}) {arrow} {}.\n", head_args.join(", "), body.join(", ")));
            }
            if self.rng.gen_bool(0.2) {
                out.push_str("% a comment\n");
            }
        }
        if self.rng.gen_bool(0.7) {
            let (q, a) = idb.choose(self.rng).unwrap().clone();
            let args: Vec<String> = (0..a)
                .map(|i| if self.rng.gen_bool(0.8) { format!("V{i}") } else { self.constant() })
                .collect();
            out.push_str(&format!("query {q}({}).\n", args.join(", ")));
        }
        out
    }
}

fn parser() -> Check {
    let p = parse_program(TC_PROGRAM).map_err(|e| e.to_string())?;
    ensure!(
        p.decls.len() == 1 && p.rules.len() == 2 && p.query.is_some(),
        "TC program shape: {} decls, {} rules",
        p.decls.len(),
        p.rules.len()
    );

    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let mut round_trips = 0;
    while round_trips < 1000 {
        let text = ProgramGen { rng: &mut rng }.generate();
        let parsed = parse_program(&text).map_err(|e| format!("generated program rejected: {e}\n{text}"))?;
        let formatted = format_program(&parsed);
        let reparsed = parse_program(&formatted).map_err(|e| format!("formatted program rejected: {e}\n{formatted}"))?;
        ensure!(reparsed == parsed, "round trip changed the program:\n{text}\n---\n{formatted}");
        ensure!(format_program(&reparsed) == formatted, "formatting is not idempotent:\n{formatted}");
        round_trips += 1;
    }

    let mut positions = 0;
    for i in 0..200 {
        let mut text = String::from("database({ e(A: integer, B: integer) }).\n");
        for k in 0..rng.gen_range(0..5) {
            text.push_str(&format!("r{k}(X) <- e(X, _).\n"));
        }
        let line = text.lines().count() + 1;
        let pad = " ".repeat(rng.gen_range(0..8));
        let (stmt, needle, want_kind) = match i % 3 {
            0 => (format!("{pad}bad(X, Ghost) <- e(X, Y)."), "Ghost", "SafetyError"),
            1 => (format!("{pad}bad(X) <- e(X, Y), Ghost > 1."), "Ghost", "SafetyError"),
            _ => (format!("{pad}bad(X) <- e(X, Y), e(X, Y, Z)."), "e(X, Y, Z)", "ArityError"),
        };
        let column = stmt.find(needle).unwrap() + 1;
        text.push_str(&stmt);
        match parse_program(&text) {
            Err(e) => {
                ensure!(e.kind() == want_kind, "expected {want_kind}, got {e}");
                let pos = e.pos().ok_or("error without position")?;
                ensure!(
                    (pos.line, pos.column) == (line, column),
                    "{want_kind} at {pos}, expected {line}:{column} in\n{text}"
                );
                positions += 1;
            }
            Ok(_) => return Err(format!("accepted invalid program:\n{text}")),
        }
    }
    Ok(format!(
        "TC program = 1 decl/2 rules/1 query; {round_trips} round trips; {positions} error positions exact"
    ))
}

// ---------------------------------------------------------------- graphs

fn random_digraph(rng: &mut StdRng, n: i64, p: f64) -> Vec<(i64, i64)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn floyd_warshall(n: usize, edges: &[(i64, i64)]) -> BTreeSet<(i64, i64)> {
    let mut reach = vec![vec![false; n]; n];
    for &(a, b) in edges {
        reach[a as usize][b as usize] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for (i, row) in reach.iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            if r {
                out.insert((i as i64, j as i64));
            }
        }
    }
    out
}

/// The 50-graph corpus: sizes up to 50, edge probability swept 0.02..0.3.
fn graph_corpus() -> Vec<(i64, Vec<(i64, i64)>)> {
    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    (0..50)
        .map(|g| {
            let n = rng.gen_range(2..=50);
            let p = 0.02 + 0.28 * g as f64 / 49.0;
            (n, random_digraph(&mut rng, n, p))
        })
        .collect()
}

fn tc_oracle() -> Check {
    let mut session = Session::new("TC");
    let mut tc = session.new_function("TC").map_err(|e| e.to_string())?;
    tc.set_direction(&[("FromCol", "Node1"), ("ToCol", "Node2")]).map_err(|e| e.to_string())?;
    let mut total = 0;
    for (i, (n, edges)) in graph_corpus().into_iter().enumerate() {
        let out = tc
            .materialize(&[int_pairs(("Node1", "Node2"), &edges)], &mut session)
            .map_err(|e| e.to_string())?;
        let want = floyd_warshall(n as usize, &edges);
        ensure!(pair_set(&out) == want, "graph {i} (n={n}): closure differs");
        total += want.len();
    }
    Ok(format!("50 graphs equal to Floyd-Warshall ({total} closure pairs)"))
}

// ---------------------------------------------------------------- semi-naive

fn run_both(text: &str, db: &Database) -> Result<(Database, Vec<StratumStats>, Database, Vec<StratumStats>), String> {
    let p = parse_program(text).map_err(|e| format!("{e}\n{text}"))?;
    let plans = compile(&p, &analyze(&p).map_err(|e| format!("{e}\n{text}"))?).map_err(|e| e.to_string())?;
    let (semi, s1) = evaluate(&plans, db, &Limits::default()).map_err(|e| e.to_string())?;
    let (naive, s2) = evaluate_naive(&plans, db, &Limits::default()).map_err(|e| e.to_string())?;
    Ok((semi, s1.strata, naive, s2.strata))
}

fn random_rule_set(rng: &mut StdRng) -> String {
    const VARS: [&str; 4] = ["X", "Y", "Z", "W"];
    let arity = |p: &str| if p == "p2" || p == "p3" { 1 } else { 2 };
    let mut rules = Vec::new();
    let atom = |rng: &mut StdRng, pred: &str, bound: &mut Vec<String>| -> String {
        let args: Vec<String> = (0..arity(pred))
            .map(|_| {
                if rng.gen_bool(0.15) {
                    rng.gen_range(0..6).to_string()
                } else {
                    let v = VARS.choose(rng).unwrap().to_string();
                    if !bound.contains(&v) {
                        bound.push(v.clone());
                    }
                    v
                }
            })
            .collect();
        format!("{pred}({})", args.join(", "))
    };
    let idb = ["p0", "p1", "p2", "p3"];
    for (i, head) in idb.iter().enumerate() {
        let extra = rng.gen_range(0..3);
        for k in 0..=extra {
            let mut bound = Vec::new();
            let mut body = Vec::new();
            let n_atoms = rng.gen_range(1..=3);
            for j in 0..n_atoms {
                let pred = if k == 0 && j == 0 {
                    ["e", "f"].choose(rng).unwrap().to_string()
                } else if rng.gen_bool(0.5) {
                    ["e", "f"].choose(rng).unwrap().to_string()
                } else {
                    // earlier predicates and anything for recursion
                    idb[rng.gen_range(0..idb.len().min(i + 2))].to_string()
                };
                body.push(atom(rng, &pred, &mut bound));
            }
            if bound.is_empty() {
                continue;
            }
            if bound.len() >= 2 && rng.gen_bool(0.3) {
                let op = ["<", "!=", "<="].choose(rng).unwrap();
                body.push(format!("{} {op} {}", bound[0], bound[1]));
            }
            let head_args: Vec<String> = (0..arity(head)).map(|_| bound.choose(rng).unwrap().clone()).collect();
            rules.push(format!("{head}({}) <- {}.", head_args.join(", "), body.join(", ")));
        }
    }
    // every idb predicate must have a rule
    for head in idb {
        if !rules.iter().any(|r| r.starts_with(&format!("{head}("))) {
            let args = if arity(head) == 1 { "X" } else { "X, Y" };
            let body = if arity(head) == 1 { "e(X, _)" } else { "e(X, Y)" };
            rules.push(format!("{head}({args}) <- {body}."));
        }
    }
    if rng.gen_bool(0.5) {
        rules.push("agg(X, count<Y>) <- p0(X, Y).".into());
        rules.push("best(X, min<Y>) <- p1(X, Y).".into());
    }
    format!(
        "database({{ e(A: integer, B: integer), f(A: integer, B: integer) }}).\n{}",
        rules.join("\n")
    )
}

fn semi_naive_equals_naive() -> Check {
    const TC: &str = llib_core::library::TC;
    let mut compared = 0;
    for (i, (_, edges)) in graph_corpus().into_iter().enumerate() {
        let mut db = Database::new();
        db.insert("arc", int_pairs(("From", "To"), &edges));
        let (semi, _, naive, _) = run_both(TC, &db)?;
        ensure!(semi == naive, "graph {i}: databases differ");
        compared += 1;
    }
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    for i in 0..200 {
        let text = random_rule_set(&mut rng);
        let mut db = Database::new();
        for name in ["e", "f"] {
            let rows: Vec<(i64, i64)> = (0..rng.gen_range(0..12))
                .map(|_| (rng.gen_range(0..6), rng.gen_range(0..6)))
                .collect();
            db.insert(name, int_pairs(("A", "B"), &rows));
        }
        let (semi, _, naive, _) = run_both(&text, &db)?;
        ensure!(semi == naive, "rule set {i} differs:\n{text}");
        compared += 1;
    }

    let chain: Vec<(i64, i64)> = (1..6).map(|i| (i, i + 1)).collect();
    let mut db = Database::new();
    db.insert("arc", int_pairs(("From", "To"), &chain));
    let (_, semi, _, naive) = run_both(TC, &db)?;
    let s = semi.iter().find(|s| s.recursive).ok_or("no recursive stratum")?;
    let n = naive.iter().find(|s| s.recursive).ok_or("no recursive stratum")?;
    ensure!(s.delta_sizes == [5, 4, 3, 2, 1], "chain deltas {:?}", s.delta_sizes);
    ensure!(
        s.evaluated_rows.iter().zip(&n.evaluated_rows).all(|(a, b)| a <= b)
            && s.evaluated_rows.iter().sum::<usize>() <= n.evaluated_rows.iter().sum::<usize>(),
        "semi-naive evaluated {:?}, naive {:?}",
        s.evaluated_rows,
        n.evaluated_rows
    );
    Ok(format!(
        "{compared} databases identical; chain deltas {:?}; evaluated rows semi {:?} <= naive {:?}",
        s.delta_sizes, s.evaluated_rows, n.evaluated_rows
    ))
}

// ---------------------------------------------------------------- cc, sssp

fn union_find_labels(edges: &[(i64, i64)]) -> BTreeMap<i64, i64> {
    let mut parent: HashMap<i64, i64> = HashMap::new();
    fn find(parent: &mut HashMap<i64, i64>, x: i64) -> i64 {
        let p = *parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let root = find(parent, p);
        parent.insert(x, root);
        root
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            // keep the smaller id as root so the root is the label
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent.insert(hi, lo);
        }
    }
    let nodes: Vec<i64> = parent.keys().copied().collect();
    nodes.into_iter().map(|n| (n, find(&mut parent, n))).collect()
}

fn dijkstra(n: usize, edges: &[(i64, i64, f64)], source: i64) -> BTreeMap<i64, f64> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a as usize].push((b as usize, w));
    }
    let mut dist: Vec<Option<f64>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source as usize] = Some(0.0);
    heap.push(Reverse((OrdF64(0.0), source as usize)));
    while let Some(Reverse((OrdF64(du), u))) = heap.pop() {
        if dist[u].is_some_and(|x| du > x) {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = du + w;
            if dist[v].is_none_or(|x| nd < x) {
                dist[v] = Some(nd);
                heap.push(Reverse((OrdF64(nd), v)));
            }
        }
    }
    dist.iter()
        .enumerate()
        .filter_map(|(i, d)| Some((i as i64, (*d)?)))
        .collect()
}

#[derive(PartialEq, PartialOrd, Clone, Copy)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn weighted(edges: &[(i64, i64, f64)]) -> Relation {
    Relation::from_rows(
        Schema::of(&[
            ("Src", ColumnType::Integer),
            ("Dst", ColumnType::Integer),
            ("Cost", ColumnType::Double),
        ])
        .unwrap(),
        edges.iter().map(|&(a, b, w)| vec![a.into(), b.into(), d(w)]),
    )
    .unwrap()
}

fn cc_and_sssp() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let mut session = Session::new("graphs");
    let cc = session.new_function("ConnectedComponents").map_err(|e| e.to_string())?;
    for g in 0..50 {
        let n = rng.gen_range(2..=50);
        let p = 0.01 + 0.1 * g as f64 / 49.0;
        let edges: Vec<(i64, i64)> = random_digraph(&mut rng, n, p);
        let out = cc
            .materialize(&[int_pairs(("From", "To"), &edges)], &mut session)
            .map_err(|e| e.to_string())?;
        let got: BTreeMap<i64, i64> = pair_set(&out).into_iter().collect();
        ensure!(got == union_find_labels(&edges), "CC graph {g} differs");
    }

    let mut sssp = session.new_function("SSSP").map_err(|e| e.to_string())?;
    sssp.set_direction(&[("From", "Src"), ("To", "Dst"), ("Weight", "Cost")]).map_err(|e| e.to_string())?;
    let mut worst_rel = 0.0f64;
    for g in 0..50 {
        let n = rng.gen_range(2..=50usize);
        let integer = g % 2 == 0;
        let mut edges = Vec::new();
        for a in 0..n as i64 {
            for b in 0..n as i64 {
                if rng.gen_bool(0.08) {
                    let w = if integer {
                        rng.gen_range(0..20) as f64
                    } else {
                        rng.gen_range(0.0..10.0)
                    };
                    edges.push((a, b, w));
                }
            }
        }
        let source = rng.gen_range(0..n as i64);
        sssp.set_param("source", source).map_err(|e| e.to_string())?;
        let out = sssp.materialize(&[weighted(&edges)], &mut session).map_err(|e| e.to_string())?;
        let got: BTreeMap<i64, f64> = out
            .rows()
            .map(|r| (r[0].as_i64().unwrap(), r[1].as_f64().unwrap()))
            .collect();
        let want = dijkstra(n, &edges, source);
        ensure!(
            got.keys().eq(want.keys()),
            "SSSP graph {g}: reachable sets differ"
        );
        for (node, w) in &want {
            let e = got[node];
            if integer {
                ensure!(e == *w, "SSSP graph {g} node {node}: {e} != {w}");
            } else {
                let rel = if *w == 0.0 { e.abs() } else { ((e - w) / w).abs() };
                worst_rel = worst_rel.max(rel);
                ensure!(rel <= 1e-9, "SSSP graph {g} node {node}: {e} vs {w}");
            }
        }
    }
    Ok(format!(
        "CC = union-find on 50 graphs; SSSP = Dijkstra on 50 graphs (integer weights exact, worst relative error {worst_rel:.1e})"
    ))
}

// ---------------------------------------------------------------- mlm

fn mlm_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    let mut session = Session::new("MLM");
    let mut mlm = session.new_function("MLM").map_err(|e| e.to_string())?;
    mlm.set_direction(&[("MCol", "Member"), ("ProfitCol", "Bonus")]).map_err(|e| e.to_string())?;
    mlm.set_sec_direction(&[("MCol", "Mem1"), ("M2Col", "Mem2")]).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for f in 0..50 {
        let m = rng.gen_range(1..=30usize);
        let p = [0.05, 0.1, 0.5][f % 3];
        let text_ids = f % 4 == 1;
        let id = |i: usize| -> Value {
            if text_ids {
                Value::text(format!("m{i}"))
            } else {
                Value::Integer(i as i64)
            }
        };
        let parent: Vec<Option<usize>> = (0..m)
            .map(|i| (i > 0 && rng.gen_bool(0.8)).then(|| rng.gen_range(0..i)))
            .collect();
        let sales: Vec<f64> = (0..m).map(|_| (rng.gen_range(0.0..1000.0f64) * 100.0).round() / 100.0).collect();

        let mut want = sales.clone();
        for (member, s) in sales.iter().enumerate() {
            let mut at = parent[member];
            while let Some(a) = at {
                want[a] += p * s;
                at = parent[a];
            }
        }

        let key_ty = if text_ids { ColumnType::String } else { ColumnType::Integer };
        let sales_rel = Relation::from_rows(
            Schema::of(&[("Member", key_ty), ("Bonus", ColumnType::Double)]).unwrap(),
            sales.iter().enumerate().map(|(i, s)| vec![id(i), d(*s)]),
        )
        .unwrap();
        let sponsor_rel = Relation::from_rows(
            Schema::of(&[("Mem1", key_ty), ("Mem2", key_ty)]).unwrap(),
            parent
                .iter()
                .enumerate()
                .filter_map(|(c, p)| Some(vec![id((*p)?), id(c)])),
        )
        .unwrap();
        mlm.set_param("proportion", p).map_err(|e| e.to_string())?;
        let out = mlm.materialize(&[sales_rel, sponsor_rel], &mut session).map_err(|e| e.to_string())?;
        ensure!(out.len() == m, "forest {f}: {} bonus rows for {m} members", out.len());
        for row in out.rows() {
            let i = (0..m).find(|&i| id(i) == row[0]).ok_or("unknown member")?;
            let got = row[1].as_f64().unwrap();
            let rel = ((got - want[i]) / want[i].max(1e-12)).abs();
            worst = worst.max(rel);
            ensure!(rel <= 1e-9, "forest {f} member {i}: {got} vs {}", want[i]);
        }
    }

    let sales = Relation::from_rows(
        Schema::of(&[("Member", ColumnType::Integer), ("Bonus", ColumnType::Double)]).unwrap(),
        (1..=3).map(|i| vec![Value::Integer(i), d(10.0)]),
    )
    .unwrap();
    let cyclic = int_pairs(("Mem1", "Mem2"), &[(1, 2), (2, 3), (3, 1)]);
    match mlm.materialize(&[sales, cyclic], &mut session) {
        Err(Error::CycleError(_)) => {}
        other => return Err(format!("cyclic sponsors gave {other:?}")),
    }
    Ok(format!("50 forests match brute force (worst relative error {worst:.1e}); cycle raises CycleError"))
}

// ---------------------------------------------------------------- bgd

fn vtrain(rows: &[(i64, i64, f64, f64)]) -> Relation {
    Relation::from_rows(
        Schema::of(&[
            ("Id", ColumnType::Integer),
            ("C", ColumnType::Integer),
            ("V", ColumnType::Double),
            ("Y", ColumnType::Double),
        ])
        .unwrap(),
        rows.iter().map(|&(i, c, v, y)| vec![i.into(), c.into(), d(v), d(y)]),
    )
    .unwrap()
}

fn bgd() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0006);
    let points: Vec<(f64, f64)> = (0..30)
        .map(|_| {
            let x = rng.gen_range(0.1..2.0);
            (x, 2.0 * x + rng.gen_range(-0.05..0.05))
        })
        .collect();
    let closed_form = points.iter().map(|(x, y)| x * y).sum::<f64>() / points.iter().map(|(x, _)| x * x).sum::<f64>();
    let rows: Vec<_> = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| (i as i64, 1, x, y))
        .collect();

    let session = Session::new("BGD");
    let mut lin = session.new_function("LinRegBGD").map_err(|e| e.to_string())?;
    lin.set_param("lr", 0.05).map_err(|e| e.to_string())?;
    lin.set_param("iterations", 500).map_err(|e| e.to_string())?;
    let (db, trained, _) = lin.evaluate(&[vtrain(&rows)], &Limits::default()).map_err(|e| e.to_string())?;
    let w = trained.rows().next().ok_or("no trained parameter")?[1].as_f64().unwrap();
    ensure!((w - closed_form).abs() < 1e-3, "parameter {w} vs closed form {closed_form}");

    let model = db.get("model").ok_or("no model relation")?;
    let mut by_iter: BTreeMap<i64, f64> = BTreeMap::new();
    for r in model.rows() {
        by_iter.insert(r[0].as_i64().unwrap(), r[2].as_f64().unwrap());
    }
    ensure!(by_iter.len() == 501, "{} model iterations", by_iter.len());
    let loss = |w: f64| points.iter().map(|(x, y)| (w * x - y).powi(2)).sum::<f64>() / points.len() as f64;
    let losses: Vec<f64> = by_iter.values().map(|&w| loss(w)).collect();
    for (j, pair) in losses.windows(2).enumerate() {
        ensure!(
            pair[1] <= pair[0] * (1.0 + 1e-12),
            "loss rose at iteration {}: {} -> {}",
            j + 1,
            pair[0],
            pair[1]
        );
    }

    // logistic regression on 20 separable points with a bias feature
    let mut log_rows = Vec::new();
    let mut labels = BTreeMap::new();
    for i in 0..20i64 {
        let x = if i < 10 { -(0.5 + 0.1 * i as f64) } else { 0.5 + 0.1 * (i - 10) as f64 };
        let y = if x > 0.0 { 1.0 } else { 0.0 };
        labels.insert(i, y as i64);
        log_rows.push((i, 1, 1.0, y));
        log_rows.push((i, 2, x, y));
    }
    let mut session = Session::new("LogReg");
    let mut log = session.new_function("LogRegBGD").map_err(|e| e.to_string())?;
    log.set_param("iterations", 500).map_err(|e| e.to_string())?;
    let trained = log.materialize(&[vtrain(&log_rows)], &mut session).map_err(|e| e.to_string())?;
    let test = Relation::from_rows(
        Schema::of(&[("Id", ColumnType::Integer), ("C", ColumnType::Integer), ("V", ColumnType::Double)]).unwrap(),
        log_rows.iter().map(|&(i, c, v, _)| vec![i.into(), c.into(), d(v)]),
    )
    .unwrap();
    let pred = log.predict(&trained, &test, &mut session).map_err(|e| e.to_string())?;
    let correct = pred
        .rows()
        .filter(|r| labels[&r[0].as_i64().unwrap()] == r[1].as_i64().unwrap())
        .count();
    ensure!(correct == 20, "LogReg training accuracy {correct}/20");
    Ok(format!(
        "LinReg w={w:.6} vs closed form {closed_form:.6}; loss non-increasing over 500 steps ({:.3e} -> {:.3e}); LogReg 20/20",
        losses[0],
        losses[losses.len() - 1]
    ))
}

// ---------------------------------------------------------------- xy

fn aggregates_in_recursion() -> Check {
    let bgd = llib_core::library::substitute(LINREG_BGD, |p| {
        Ok(match p {
            "init" => "0.01".into(),
            "iterations" => "10".into(),
            _ => "0.05".into(),
        })
    })
    .map_err(|e| e.to_string())?;
    let program = parse_program(&bgd).map_err(|e| e.to_string())?;
    let strat = analyze(&program).map_err(|e| format!("BGD rejected: {e}"))?;
    ensure!(
        strat.xy_key("gradient") == Some(0) && strat.xy_key("predict") == Some(0),
        "BGD iteration key not found"
    );

    let unkeyed = "database({ e(A: integer, B: integer) }).
s(X, sum<Y, Y>) <- e(X, Y).
s(Y, sum<X, T>) <- s(X, T), e(X, Y).";
    match analyze(&parse_program(unkeyed).map_err(|e| e.to_string())?) {
        Err(Error::UnstratifiableAggregate { .. }) => {}
        other => return Err(format!("un-keyed recursive sum gave {other:?}")),
    }

    let mut rng = StdRng::seed_from_u64(0x5eed_0007);
    let catalog = Catalog::new();
    let mut sssp = catalog.new_function("SSSP").map_err(|e| e.to_string())?;
    sssp.set_param("source", 0).map_err(|e| e.to_string())?;
    let mut worst_tail = 0;
    for g in 0..30 {
        let n = rng.gen_range(3..=40i64);
        // a ring guarantees a cycle through every node
        let mut edges: Vec<(i64, i64, f64)> = (0..n).map(|i| (i, (i + 1) % n, rng.gen_range(0.0..5.0))).collect();
        for _ in 0..n * 2 {
            edges.push((rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0.0..5.0)));
        }
        let input = Relation::from_rows(
            Schema::of(&[("From", ColumnType::Integer), ("To", ColumnType::Integer), ("Weight", ColumnType::Double)])
                .unwrap(),
            edges.iter().map(|&(a, b, w)| vec![a.into(), b.into(), d(w)]),
        )
        .unwrap();
        let (_, _, stats) = sssp.evaluate(&[input], &Limits::default()).map_err(|e| e.to_string())?;
        let st = stats.strata.iter().find(|s| s.recursive).ok_or("no recursive stratum")?;
        let last_improvement = st.delta_sizes.iter().rposition(|&d| d > 0).unwrap_or(0) + 1;
        let tail = st.iterations - last_improvement;
        worst_tail = worst_tail.max(tail);
        ensure!(
            tail <= n as usize && st.iterations <= n as usize + 1,
            "graph {g}: {} iterations, last improvement at {last_improvement}, |V|={n}",
            st.iterations
        );
    }
    Ok(format!(
        "BGD keyed on J; un-keyed sum rejected; SSSP on 30 cyclic graphs stops within {worst_tail} round(s) of its last improvement"
    ))
}

// ---------------------------------------------------------------- limits

fn with_watchdog<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<(T, Duration), String> {
    let (tx, rx) = mpsc::channel();
    let t0 = Instant::now();
    std::thread::spawn(move || {
        let _ = tx.send(f());
    });
    rx.recv_timeout(Duration::from_secs(1))
        .map(|v| (v, t0.elapsed()))
        .map_err(|_| "watchdog: still running after 1s".to_string())
}

fn plans_for(text: &str) -> Vec<llib_core::StratumPlan> {
    let p = parse_program(text).unwrap();
    compile(&p, &analyze(&p).unwrap()).unwrap()
}

fn robustness() -> Check {
    const NAT: &str = "nat(0).\nnat(Y) <- nat(X), Y = X + 1.";
    let (r, t_iter) = with_watchdog(|| {
        let limits = Limits {
            max_iterations: 1000,
            ..Limits::default()
        };
        evaluate(&plans_for(NAT), &Database::new(), &limits).map(|_| ())
    })?;
    ensure!(
        matches!(r, Err(Error::LimitExceeded { limit: Limit::Iterations, value: 1000 })),
        "iteration limit gave {r:?}"
    );

    let (r, t_default) = with_watchdog(|| evaluate(&plans_for(NAT), &Database::new(), &Limits::default()).map(|_| ()))?;
    ensure!(
        matches!(r, Err(Error::LimitExceeded { limit: Limit::Iterations, .. })),
        "default limits gave {r:?}"
    );

    let (r, _) = with_watchdog(|| {
        let limits = Limits {
            max_rows: 5_000,
            ..Limits::default()
        };
        let text = format!("{NAT}\npair(X, Y) <- nat(X), nat(Y).");
        evaluate(&plans_for(&text), &Database::new(), &limits).map(|_| ())
    })?;
    ensure!(
        matches!(r, Err(Error::LimitExceeded { limit: Limit::Rows, .. })),
        "row limit gave {r:?}"
    );

    let (r, t_deadline) = with_watchdog(|| {
        let limits = Limits {
            max_iterations: usize::MAX,
            max_rows: usize::MAX,
            deadline: Some(Instant::now() + Duration::from_millis(200)),
            cancel: None,
        };
        evaluate(&plans_for(NAT), &Database::new(), &limits).map(|_| ())
    })?;
    ensure!(matches!(r, Err(Error::Timeout)), "deadline gave {r:?}");

    let cancel = Arc::new(AtomicBool::new(true));
    let limits = Limits {
        cancel: Some(cancel),
        ..Limits::default()
    };
    let r = evaluate(&plans_for(NAT), &Database::new(), &limits).map(|_| ());
    ensure!(matches!(r, Err(Error::Cancelled)), "cancel gave {r:?}");
    Ok(format!(
        "LimitExceeded at 1000 iterations in {t_iter:.2?}, at the default limit in {t_default:.2?}; row cap hit; 200ms deadline stopped in {t_deadline:.2?}"
    ))
}

// ---------------------------------------------------------------- service

fn service() -> Check {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let timeout = Duration::from_millis(1000);
        let config = llib_service::Config {
            port: 0,
            timeout,
            max_iterations: usize::MAX,
            max_rows: usize::MAX,
            ..llib_service::Config::default()
        };
        let (addr, _server) = llib_service::spawn(config).await.map_err(|e| e.to_string())?;
        let base = format!("http://{addr}");
        let client = reqwest::Client::new();
        let post = |body: Json| {
            let client = client.clone();
            let url = format!("{base}/v1/execute");
            async move {
                let resp = client.post(url).json(&body).send().await.map_err(|e| e.to_string())?;
                let status = resp.status().as_u16();
                let body: Json = resp.json().await.map_err(|e| e.to_string())?;
                Ok::<_, String>((status, body))
            }
        };

        let examples: Json = client
            .get(format!("{base}/v1/examples"))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        let examples = examples.as_array().ok_or("examples is not a list")?;
        for ex in examples {
            let (status, body) = post(json!({"program": ex["program"], "relations": ex["relations"]})).await?;
            ensure!(status == 200 && body["status"] == "ok", "example {} -> {status} {body}", ex["id"]);
        }

        let hostile = "nat(0).\nnat(Y) <- nat(X), Y = X + 1.\npair(X, Y) <- nat(X), nat(Y).\nquery pair(X, Y).";
        let t0 = Instant::now();
        let (status, body) = post(json!({"program": hostile})).await?;
        let elapsed = t0.elapsed();
        ensure!(status == 408 || status == 422, "hostile request -> {status} {body}");
        ensure!(
            elapsed < timeout + Duration::from_millis(500),
            "hostile request answered after {elapsed:?}"
        );

        let edges: Vec<Json> = (0..30).map(|i| json!([i, (i * 7 + 3) % 30])).collect();
        let req = json!({
            "program": TC_PROGRAM,
            "relations": [{"name": "arc", "schema": [{"name": "From", "type": "integer"}, {"name": "To", "type": "integer"}], "rows": edges}]
        });
        let (a, b) = tokio::join!(post(req.clone()), post(req));
        let (a, b) = (a?, b?);
        ensure!(a.0 == 200 && a.1["rows"] == b.1["rows"], "interleaved responses differ");
        Ok(format!(
            "{} examples ok; hostile request -> {status} in {elapsed:.2?}; interleaved responses identical",
            examples.len()
        ))
    })
}
