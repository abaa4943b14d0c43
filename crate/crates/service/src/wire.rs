//! JSON request and response bodies.
//!
//! Doubles travel as decimal strings in shortest round-trip form, so a
//! client never loses precision to its own float parser. Requests accept
//! doubles as strings or numbers.

use std::time::Duration;

use axum::http::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use llib_core::{Column, ColumnType, Error, Outcome, Relation, Schema, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecuteRequest {
    pub program: String,
    #[serde(default)]
    pub relations: Vec<InputRelation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<RequestLimits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRelation {
    pub name: String,
    pub schema: Vec<Column>,
    #[serde(default)]
    pub rows: Vec<Vec<Json>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestLimits {
    pub max_iterations: Option<usize>,
    pub max_rows: Option<usize>,
    pub timeout_ms: Option<u64>,
}

/// A validated request.
#[derive(Debug, Clone)]
pub struct DecodedRequest {
    pub program: String,
    pub relations: Vec<(String, Relation)>,
    pub max_iterations: Option<usize>,
    pub max_rows: Option<usize>,
    pub timeout: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub iterations: usize,
    pub rows_produced: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecuteResponse {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub types: Option<Vec<ColumnType>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<Json>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<Stats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Integer(i) => Json::from(*i),
        Value::Double(d) => Json::String(format!("{d:?}")),
        Value::Text(s) => Json::String(s.to_string()),
    }
}

pub fn json_to_value(j: &Json, ty: ColumnType) -> Result<Value, String> {
    match (ty, j) {
        (ColumnType::Integer, Json::Number(n)) => n
            .as_i64()
            .map(Value::Integer)
            .ok_or_else(|| format!("{n} is not an integer")),
        (ColumnType::Double, Json::Number(n)) => {
            Value::double(n.as_f64().ok_or_else(|| format!("{n} is not a double"))?).map_err(|e| e.to_string())
        }
        (ColumnType::Integer | ColumnType::Double, Json::String(s)) => {
            Value::parse_as(s, ty).map_err(|e| e.to_string())
        }
        (ColumnType::String, Json::String(s)) => Ok(Value::text(s)),
        (ty, other) => Err(format!("expected {}, found {other}", ty.name())),
    }
}

impl ExecuteResponse {
    pub fn ok(outcome: &Outcome) -> ExecuteResponse {
        let (columns, types, rows) = match &outcome.answer {
            Some(rel) => (
                rel.schema().names().map(str::to_string).collect(),
                rel.schema().types().collect(),
                rel.rows().map(|r| r.iter().map(value_to_json).collect()).collect(),
            ),
            None => (vec![], vec![], vec![]),
        };
        ExecuteResponse {
            status: "ok".into(),
            columns: Some(columns),
            types: Some(types),
            rows: Some(rows),
            stats: Some(Stats {
                iterations: outcome.stats.iterations(),
                rows_produced: outcome.stats.rows_produced(),
                elapsed_ms: outcome.stats.elapsed_ms,
            }),
            error: None,
        }
    }

    pub fn error(e: &Error) -> ExecuteResponse {
        ExecuteResponse {
            status: "error".into(),
            columns: None,
            types: None,
            rows: None,
            stats: None,
            error: Some(ErrorBody {
                kind: e.kind().into(),
                message: e.to_string(),
                line: e.pos().map(|p| p.line),
                column: e.pos().map(|p| p.column),
            }),
        }
    }

    pub fn failure(kind: &str, message: &str) -> ExecuteResponse {
        ExecuteResponse {
            status: "error".into(),
            columns: None,
            types: None,
            rows: None,
            stats: None,
            error: Some(ErrorBody {
                kind: kind.into(),
                message: message.into(),
                line: None,
                column: None,
            }),
        }
    }
}

type Rejection = (StatusCode, ExecuteResponse);

fn bad(message: String) -> Rejection {
    (StatusCode::BAD_REQUEST, ExecuteResponse::failure("BadRequest", &message))
}

/// Parses and validates a request body. Malformed bodies and rows that do
/// not fit their schema give 400; more than `max_input_rows` rows give 413.
pub fn decode_request(body: &[u8], max_input_rows: usize) -> Result<DecodedRequest, Rejection> {
    let req: ExecuteRequest = serde_json::from_slice(body).map_err(|e| bad(format!("malformed request: {e}")))?;
    let total: usize = req.relations.iter().map(|r| r.rows.len()).sum();
    if total > max_input_rows {
        return Err((
            StatusCode::PAYLOAD_TOO_LARGE,
            ExecuteResponse::failure(
                "PayloadTooLarge",
                &format!("{total} input rows exceed the cap of {max_input_rows}"),
            ),
        ));
    }
    let mut relations: Vec<(String, Relation)> = Vec::with_capacity(req.relations.len());
    for r in &req.relations {
        if relations.iter().any(|(n, _)| *n == r.name) {
            return Err(bad(format!("relation `{}` given twice", r.name)));
        }
        let schema = Schema::new(r.schema.clone()).map_err(|e| bad(format!("relation `{}`: {e}", r.name)))?;
        let mut rel = Relation::new(schema.clone());
        for (i, row) in r.rows.iter().enumerate() {
            if row.len() != schema.arity() {
                return Err(bad(format!(
                    "relation `{}` row {i}: expected {} values, found {}",
                    r.name,
                    schema.arity(),
                    row.len()
                )));
            }
            let tuple = row
                .iter()
                .zip(schema.columns())
                .map(|(j, c)| json_to_value(j, c.ty))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("relation `{}` row {i}: {e}", r.name)))?;
            rel.insert(tuple).map_err(|e| bad(e.to_string()))?;
        }
        relations.push((r.name.clone(), rel));
    }
    let limits = req.limits.unwrap_or_default();
    Ok(DecodedRequest {
        program: req.program,
        relations,
        max_iterations: limits.max_iterations,
        max_rows: limits.max_rows,
        timeout: limits.timeout_ms.map(Duration::from_millis),
    })
}

/// Wire form of a relation.
pub fn encode_relation(name: &str, rel: &Relation) -> InputRelation {
    InputRelation {
        name: name.to_string(),
        schema: rel.schema().columns().to_vec(),
        rows: rel.rows().map(|r| r.iter().map(value_to_json).collect()).collect(),
    }
}
