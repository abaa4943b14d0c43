//! Templates for the built-in functions.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{AttrType, FunctionDef, ParamKind, ParamSpec, SlotSpec};
use crate::error::{Error, Result};
use crate::relation::{Relation, Value};

pub const TC: &str = "database({
arc(From: integer, To: integer)
}).
tc(From,To)<- arc(From,To).
tc(From,To) <- tc(From,Tmp), arc(Tmp,To).
query tc(From, To).";

pub const CONNECTED_COMPONENTS: &str = "database({
edge(From: integer, To: integer)
}).
node(X) <- edge(X, _).
node(X) <- edge(_, X).
link(X, Y) <- edge(X, Y).
link(X, Y) <- edge(Y, X).
cc(X, min<X>) <- node(X).
cc(Y, min<Z>) <- cc(X, Z), link(X, Y).
query cc(Node, ComponentId).";

pub const SSSP: &str = "database({
edge(From: integer, To: integer, Weight: double)
}).
dist(X, min<D>) <- X = $source, D = 0.0.
dist(Y, min<D>) <- dist(X, D1), edge(X, Y, W), D = D1 + W.
query dist(Node, Distance).";

pub const MLM: &str = "database({
sales(M: integer, Profit: double),
sponsor(M: integer, M2: integer)
}).
desc(M, D) <- sponsor(M, D).
desc(M, D) <- desc(M, X), sponsor(X, D).
down(M, sum<D, P>) <- desc(M, D), sales(D, P).
down(M, sum<M, Z>) <- sales(M, _), Z = 0.0.
bonus(M, B) <- sales(M, P), down(M, S), B = P + $proportion * S.
query bonus(M, Bonus).";

pub const LINREG_BGD: &str = "database({
vtrain(Id: integer, C: integer, V: double, Y: double)
}).
size(count<Id>) <- vtrain(Id, _, _, _).
model(0, C, $init) <- vtrain(_, C, _, _).
model(J1, C, NP) <- model(J, C, P), gradient(J, C, G), size(N), J < $iterations, NP = P - $lr * G / N, J1 = J + 1.
gradient(J, C, sum<Id, G0>) <- vtrain(Id, C, V, Y), predict(J, Id, YP), G0 = 2 * (YP - Y) * V.
predict(J, Id, sum<C, Y0>) <- vtrain(Id, C, V, _), model(J, C, P), Y0 = V * P.
trained(C, P) <- model(J, C, P), J = $iterations.
query trained(C, P).";

pub const LOGREG_BGD: &str = "database({
vtrain(Id: integer, C: integer, V: double, Y: double)
}).
size(count<Id>) <- vtrain(Id, _, _, _).
model(0, C, $init) <- vtrain(_, C, _, _).
model(J1, C, NP) <- model(J, C, P), gradient(J, C, G), size(N), J < $iterations, NP = P - $lr * G / N, J1 = J + 1.
gradient(J, C, sum<Id, G0>) <- vtrain(Id, C, V, Y), predict(J, Id, YP), G0 = (1 / (1 + exp(0 - YP)) - Y) * V.
predict(J, Id, sum<C, Y0>) <- vtrain(Id, C, V, _), model(J, C, P), Y0 = V * P.
trained(C, P) <- model(J, C, P), J = $iterations.
query trained(C, P).";

pub const LINREG_PREDICT: &str = "database({
model(C: integer, P: double),
vtest(Id: integer, C: integer, V: double)
}).
prediction(Id, sum<C, Y0>) <- vtest(Id, C, V), model(C, P), Y0 = V * P.
query prediction(Id, Prediction).";

pub const LOGREG_PREDICT: &str = "database({
model(C: integer, P: double),
vtest(Id: integer, C: integer, V: double)
}).
score(Id, sum<C, Y0>) <- vtest(Id, C, V), model(C, P), Y0 = V * P.
prediction(Id, 1) <- score(Id, S), S >= 0.0.
prediction(Id, 0) <- score(Id, S), S < 0.0.
query prediction(Id, Prediction).";

fn slot(name: &str, attrs: &[(&str, AttrType)]) -> SlotSpec {
    SlotSpec {
        name: name.to_string(),
        attributes: attrs.iter().map(|(a, t)| (a.to_string(), *t)).collect(),
    }
}

fn bgd_params() -> Vec<ParamSpec> {
    vec![
        ParamSpec::new("lr", ParamKind::Double, Some(Value::Double(0.05)), "learning rate"),
        ParamSpec::new(
            "iterations",
            ParamKind::Integer,
            Some(Value::Integer(100)),
            "number of gradient steps",
        ),
        ParamSpec::new(
            "init",
            ParamKind::Choice(&[("constant", "0.01"), ("zero", "0.0")]),
            Some(Value::text("constant")),
            "initial value of every parameter: `constant` (0.01) or `zero`",
        ),
    ]
}

fn check_iterations(params: &BTreeMap<String, Value>) -> Result<()> {
    match params.get("iterations") {
        Some(Value::Integer(n)) if *n < 0 => {
            Err(Error::ParamError(format!("iterations must be non-negative, got {n}")))
        }
        _ => Ok(()),
    }
}

fn bgd_validate(_: &[Relation], params: &BTreeMap<String, Value>) -> Result<()> {
    check_iterations(params)
}

fn sssp_validate(inputs: &[Relation], _: &BTreeMap<String, Value>) -> Result<()> {
    for row in inputs[0].rows() {
        if row[2].as_f64().is_some_and(|w| w < 0.0) {
            return Err(Error::ParamError(format!(
                "negative edge weight {} on {} -> {}",
                row[2], row[0], row[1]
            )));
        }
    }
    Ok(())
}

/// The sponsor relation must be a forest: at most one sponsor per member
/// and no cycles.
fn mlm_validate(inputs: &[Relation], _: &BTreeMap<String, Value>) -> Result<()> {
    let mut parent: HashMap<&Value, &Value> = HashMap::new();
    for row in inputs[1].rows() {
        if let Some(prev) = parent.insert(&row[1], &row[0]) {
            return Err(Error::CycleError(format!(
                "member {} has two sponsors ({prev} and {})",
                row[1], row[0]
            )));
        }
    }
    let mut acyclic: HashSet<&Value> = HashSet::new();
    for &start in parent.keys() {
        let mut path = HashSet::new();
        let mut at = start;
        while !acyclic.contains(at) {
            if !path.insert(at) {
                return Err(Error::CycleError(format!("sponsor cycle through member {at}")));
            }
            match parent.get(at) {
                Some(p) => at = p,
                None => break,
            }
        }
        acyclic.extend(path);
    }
    Ok(())
}

pub(super) fn definitions() -> Vec<FunctionDef> {
    use AttrType::{Double, Integer, Key};
    vec![
        FunctionDef {
            name: "TC".into(),
            doc: "Transitive closure of a directed graph.".into(),
            template: TC.into(),
            slots: vec![slot("arc", &[("From", Key), ("To", Key)])],
            params: vec![],
            validate: None,
            predictor: None,
        },
        FunctionDef {
            name: "ConnectedComponents".into(),
            doc: "Connected components of the undirected reading of an edge relation. \
                  Each node is labelled with the smallest node id in its component."
                .into(),
            template: CONNECTED_COMPONENTS.into(),
            slots: vec![slot("edge", &[("From", Integer), ("To", Integer)])],
            params: vec![],
            validate: None,
            predictor: None,
        },
        FunctionDef {
            name: "SSSP".into(),
            doc: "Single-source shortest paths over non-negative edge weights.".into(),
            template: SSSP.into(),
            slots: vec![slot("edge", &[("From", Key), ("To", Key), ("Weight", Double)])],
            params: vec![ParamSpec::new("source", ParamKind::Key, None, "source node")],
            validate: Some(sssp_validate),
            predictor: None,
        },
        FunctionDef {
            name: "MLM".into(),
            doc: "Multi-level marketing bonus: own profit plus `proportion` times the \
                  profit of every direct or indirect recruit. The sponsor relation \
                  must be a forest."
                .into(),
            template: MLM.into(),
            slots: vec![
                slot("sales", &[("M", Key), ("Profit", Double)]),
                slot("sponsor", &[("M", Key), ("M2", Key)]),
            ],
            params: vec![ParamSpec::new(
                "proportion",
                ParamKind::Double,
                Some(Value::Double(0.1)),
                "share of downstream profit credited to a sponsor",
            )],
            validate: Some(mlm_validate),
            predictor: None,
        },
        FunctionDef {
            name: "LinRegBGD".into(),
            doc: "Linear regression trained by batch gradient descent. Training rows \
                  are sparse feature vectors (Id, C, V) with label Y; the result is the \
                  parameter P of each feature C."
                .into(),
            template: LINREG_BGD.into(),
            slots: vec![slot(
                "vtrain",
                &[("Id", Integer), ("C", Integer), ("V", Double), ("Y", Double)],
            )],
            params: bgd_params(),
            validate: Some(bgd_validate),
            predictor: Some("LinRegPredict".into()),
        },
        FunctionDef {
            name: "LogRegBGD".into(),
            doc: "Logistic regression trained by batch gradient descent on labels 0/1.".into(),
            template: LOGREG_BGD.into(),
            slots: vec![slot(
                "vtrain",
                &[("Id", Integer), ("C", Integer), ("V", Double), ("Y", Double)],
            )],
            params: bgd_params(),
            validate: Some(bgd_validate),
            predictor: Some("LogRegPredict".into()),
        },
        FunctionDef {
            name: "LinRegPredict".into(),
            doc: "Predictions of a trained linear model: the dot product of parameters \
                  and features."
                .into(),
            template: LINREG_PREDICT.into(),
            slots: vec![
                slot("model", &[("C", Integer), ("P", Double)]),
                slot("vtest", &[("Id", Integer), ("C", Integer), ("V", Double)]),
            ],
            params: vec![],
            validate: None,
            predictor: None,
        },
        FunctionDef {
            name: "LogRegPredict".into(),
            doc: "Labels from a trained logistic model: 1 when the sigmoid of the score \
                  is at least 0.5, else 0."
                .into(),
            template: LOGREG_PREDICT.into(),
            slots: vec![
                slot("model", &[("C", Integer), ("P", Double)]),
                slot("vtest", &[("Id", Integer), ("C", Integer), ("V", Double)]),
            ],
            params: vec![],
            validate: None,
            predictor: None,
        },
    ]
}
