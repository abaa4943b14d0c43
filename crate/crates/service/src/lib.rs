//! HTTP front end: execute programs on inline relations, list bundled
//! examples and the function catalog, and serve the playground bundle.
//!
//! Every request gets its own [`Session`]; nothing is shared between
//! requests except the immutable configuration.

pub mod examples;
pub mod wire;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use llib_core::library::Catalog;
use llib_core::{Error, Limits, Session};

pub use wire::{decode_request, DecodedRequest, ErrorBody, ExecuteRequest, ExecuteResponse};

#[derive(Debug, Clone)]
pub struct Config {
    pub port: u16,
    pub timeout: Duration,
    /// Cap on input rows summed over all relations of a request.
    pub max_input_rows: usize,
    /// Cap on derived rows.
    pub max_rows: usize,
    pub max_iterations: usize,
    pub max_body_bytes: usize,
    /// Directory holding the built playground bundle.
    pub static_dir: Option<PathBuf>,
    /// Send permissive CORS headers.
    pub cors: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            port: 8080,
            timeout: Duration::from_secs(10),
            max_input_rows: 10_000,
            max_rows: 1_000_000,
            max_iterations: llib_core::eval::DEFAULT_MAX_ITERATIONS,
            max_body_bytes: 8 * 1024 * 1024,
            static_dir: None,
            cors: false,
        }
    }
}

impl Config {
    /// Defaults overridden by `LLIB_PORT`, `LLIB_TIMEOUT_MS` and
    /// `LLIB_MAX_ROWS`.
    pub fn from_env() -> Result<Config, String> {
        let mut c = Config::default();
        fn var<T: std::str::FromStr>(name: &str) -> Result<Option<T>, String> {
            match std::env::var(name) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map(Some)
                    .map_err(|_| format!("invalid value for {name}: {v:?}")),
                Err(_) => Ok(None),
            }
        }
        if let Some(p) = var("LLIB_PORT")? {
            c.port = p;
        }
        if let Some(ms) = var::<u64>("LLIB_TIMEOUT_MS")? {
            c.timeout = Duration::from_millis(ms);
        }
        if let Some(n) = var("LLIB_MAX_ROWS")? {
            c.max_rows = n;
        }
        Ok(c)
    }
}

/// HTTP status for an engine error.
pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Timeout | Error::Cancelled => StatusCode::REQUEST_TIMEOUT,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

/// Runs one decoded request on a fresh session. Blocking.
pub fn execute(req: DecodedRequest, limits: Limits) -> (StatusCode, ExecuteResponse) {
    let mut session = Session::new("playground");
    session.set_limits(limits);
    for (name, rel) in req.relations {
        session.add_relation(&name, rel);
    }
    match session.run_text(&req.program) {
        Ok(outcome) => (StatusCode::OK, ExecuteResponse::ok(&outcome)),
        Err(e) => (status_for(&e), ExecuteResponse::error(&e)),
    }
}

/// Engine limits for a request: its own settings, capped by the service's.
pub fn limits_for(config: &Config, req: &DecodedRequest, cancel: Arc<AtomicBool>) -> Limits {
    let timeout = req
        .timeout
        .map_or(config.timeout, |t| t.min(config.timeout));
    Limits {
        max_iterations: req
            .max_iterations
            .map_or(config.max_iterations, |n| n.min(config.max_iterations)),
        max_rows: req.max_rows.map_or(config.max_rows, |n| n.min(config.max_rows)),
        deadline: Some(Instant::now() + timeout),
        cancel: Some(cancel),
    }
}

async fn execute_handler(
    State(config): State<Arc<Config>>,
    body: Result<Bytes, BytesRejection>,
) -> Response {
    let body = match body {
        Ok(b) => b,
        Err(rej) => {
            let status = rej.status();
            return (status, Json(ExecuteResponse::failure("BadRequest", &rej.body_text()))).into_response();
        }
    };
    let req = match decode_request(&body, config.max_input_rows) {
        Ok(r) => r,
        Err((status, resp)) => return (status, Json(resp)).into_response(),
    };
    let cancel = Arc::new(AtomicBool::new(false));
    let limits = limits_for(&config, &req, cancel.clone());
    let deadline = limits.deadline.expect("deadline set");
    let task = tokio::task::spawn_blocking(move || execute(req, limits));
    // The engine checks the deadline between iterations; the extra wait only
    // covers a single slow iteration, after which the task is told to stop.
    let grace = deadline.saturating_duration_since(Instant::now()) + Duration::from_millis(50);
    match tokio::time::timeout(grace, task).await {
        Ok(Ok((status, resp))) => (status, Json(resp)).into_response(),
        Ok(Err(join)) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(ExecuteResponse::failure("InternalError", &join.to_string())),
        )
            .into_response(),
        Err(_) => {
            cancel.store(true, Ordering::Relaxed);
            (StatusCode::REQUEST_TIMEOUT, Json(ExecuteResponse::error(&Error::Timeout))).into_response()
        }
    }
}

async fn examples_handler() -> impl IntoResponse {
    Json(examples::bundled())
}

async fn functions_handler() -> impl IntoResponse {
    Json(Catalog::new().describe())
}

const NO_BUNDLE: &str = "<!doctype html><title>LLib playground</title>\
<p>The playground bundle is not installed. Start the service with a static \
directory to serve it. The API lives under <code>/v1/</code>.</p>";

pub fn router(config: Config) -> Router {
    let static_dir = config.static_dir.clone();
    let cors = config.cors;
    let body_limit = config.max_body_bytes;
    let mut app = Router::new()
        .route("/v1/execute", post(execute_handler))
        .route("/v1/examples", get(examples_handler))
        .route("/v1/functions", get(functions_handler))
        .with_state(Arc::new(config))
        .layer(DefaultBodyLimit::max(body_limit));
    app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(NO_BUNDLE) })),
    };
    if cors {
        app = app.layer(CorsLayer::permissive());
    }
    app
}

/// Executes every bundled example; the service refuses to start when one
/// fails.
pub fn self_test(config: &Config) -> Result<(), String> {
    Catalog::new().self_check().map_err(|e| e.to_string())?;
    for ex in examples::bundled() {
        let body = serde_json::to_vec(&ex.request()).map_err(|e| e.to_string())?;
        let req = decode_request(&body, config.max_input_rows)
            .map_err(|(_, r)| format!("example {}: {:?}", ex.id, r.error))?;
        let limits = limits_for(config, &req, Arc::new(AtomicBool::new(false)));
        let (status, resp) = execute(req, limits);
        if status != StatusCode::OK {
            return Err(format!("example {} failed: {:?}", ex.id, resp.error));
        }
    }
    Ok(())
}

/// Binds the listener and returns its address with the serving task.
pub async fn spawn(config: Config) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", config.port)).await?;
    let addr = listener.local_addr()?;
    let app = router(config);
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok((addr, handle))
}

/// Serves on all interfaces until interrupted.
pub async fn serve(config: Config) -> std::io::Result<()> {
    self_test(&config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", config.port)).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
