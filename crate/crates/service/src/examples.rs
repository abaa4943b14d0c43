//! Programs bundled with the playground. Ids are part of the API contract.

use serde::Serialize;
use serde_json::json;

use llib_core::library::Catalog;
use llib_core::Column;
use llib_core::ColumnType::{Double, Integer};

use crate::wire::{ExecuteRequest, InputRelation};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example {
    pub id: &'static str,
    pub title: &'static str,
    pub program: String,
    pub relations: Vec<InputRelation>,
}

impl Example {
    pub fn request(&self) -> ExecuteRequest {
        ExecuteRequest {
            program: self.program.clone(),
            relations: self.relations.clone(),
            limits: None,
        }
    }
}

fn relation(name: &str, cols: &[(&str, llib_core::ColumnType)], rows: serde_json::Value) -> InputRelation {
    InputRelation {
        name: name.to_string(),
        schema: cols.iter().map(|(n, t)| Column::new(*n, *t)).collect(),
        rows: serde_json::from_value(rows).expect("example rows"),
    }
}

fn template(name: &str, params: &[(&str, llib_core::Value)]) -> String {
    let mut f = Catalog::new().new_function(name).expect("built-in");
    for (p, v) in params {
        f.set_param(p, v.clone()).expect("example parameter");
    }
    f.instantiate().expect("example template")
}

pub fn bundled() -> Vec<Example> {
    vec![
        Example {
            id: "transitive-closure",
            title: "Transitive closure",
            program: llib_core::library::TC.to_string(),
            relations: vec![relation(
                "arc",
                &[("From", Integer), ("To", Integer)],
                json!([[1, 2], [2, 3]]),
            )],
        },
        Example {
            id: "connected-components",
            title: "Connected components",
            program: template("ConnectedComponents", &[]),
            relations: vec![relation(
                "edge",
                &[("From", Integer), ("To", Integer)],
                json!([[1, 2], [3, 2], [4, 5], [6, 6]]),
            )],
        },
        Example {
            id: "sssp",
            title: "Single-source shortest paths",
            program: template("SSSP", &[("source", 1.into())]),
            relations: vec![relation(
                "edge",
                &[("From", Integer), ("To", Integer), ("Weight", Double)],
                json!([[1, 2, "4.0"], [1, 3, "1.0"], [3, 2, "2.0"], [2, 4, "1.5"], [4, 1, "0.5"]]),
            )],
        },
        Example {
            id: "mlm",
            title: "Multi-level marketing bonus",
            program: template("MLM", &[("proportion", 0.1.into())]),
            relations: vec![
                relation(
                    "sales",
                    &[("M", Integer), ("Profit", Double)],
                    json!([[1, "100.0"], [2, "50.0"], [3, "10.0"], [4, "20.0"]]),
                ),
                relation(
                    "sponsor",
                    &[("M", Integer), ("M2", Integer)],
                    json!([[1, 2], [2, 3], [1, 4]]),
                ),
            ],
        },
        Example {
            id: "linreg-bgd",
            title: "Linear regression by batch gradient descent",
            program: template("LinRegBGD", &[("lr", 0.05.into()), ("iterations", 100.into())]),
            relations: vec![relation(
                "vtrain",
                &[("Id", Integer), ("C", Integer), ("V", Double), ("Y", Double)],
                json!([[1, 1, "1.0", "2.0"], [2, 1, "2.0", "4.0"], [3, 1, "3.0", "6.0"]]),
            )],
        },
    ]
}
