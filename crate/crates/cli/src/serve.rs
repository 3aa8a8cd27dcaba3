use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Router;
use behave_core::dsl::{
    doc_error_to_json, inference_to_json, parse_json, scene_from_json, SceneMode,
};
use behave_core::model::Scene;
use behave_core::EngineConfig;
use serde_json::{json, Value as Json};

use crate::failure::Failure;

/// Outcome of one request, before it is framed for a transport.
enum Reply {
    Ok(Json),
    Engine(Json),
    BadRequest(Json),
}

fn parse_request(cfg: &EngineConfig, body: &[u8]) -> Result<(Scene, bool), Json> {
    let bad = |kind: &str, detail: &str| json!({ "kind": kind, "detail": detail });
    let j = parse_json(body).map_err(|e| doc_error_to_json(&e))?;
    let m = j
        .as_object()
        .ok_or_else(|| bad("shape", "request must be an object"))?;
    if let Some(k) = m.keys().find(|k| !matches!(k.as_str(), "scene" | "trace")) {
        return Err(bad("shape", &format!("unknown request key {k:?}")));
    }
    let scene = m
        .get("scene")
        .ok_or_else(|| bad("shape", "request needs a scene"))?;
    let trace = match m.get("trace") {
        None => false,
        Some(Json::Bool(b)) => *b,
        Some(_) => return Err(bad("shape", "trace must be a boolean")),
    };
    let scene = scene_from_json(
        scene,
        "/scene",
        cfg.maneuver_theory().schema(),
        SceneMode::Strict,
    )
    .map_err(|e| doc_error_to_json(&e))?;
    Ok((scene.scene, trace))
}

fn answer(cfg: &EngineConfig, body: &[u8]) -> Reply {
    match parse_request(cfg, body) {
        Err(error) => Reply::BadRequest(json!({ "error": error })),
        Ok((scene, trace)) => {
            let run = cfg.run(&scene);
            let j = inference_to_json(&run.outcome, trace.then_some(&run.trace));
            match run.outcome {
                Ok(_) => Reply::Ok(j),
                Err(_) => Reply::Engine(j),
            }
        }
    }
}

/// Newline-delimited requests in, one response line per request out, in
/// order. Blank lines are skipped.
pub fn stdio(cfg: EngineConfig) -> Result<u8, Failure> {
    let stdin = std::io::stdin().lock();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lines() {
        let line = line.map_err(|e| Failure::input("io", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (Reply::Ok(j) | Reply::Engine(j) | Reply::BadRequest(j)) =
            answer(&cfg, line.as_bytes());
        writeln!(stdout, "{j}")
            .and_then(|_| stdout.flush())
            .map_err(|e| Failure::input("io", e))?;
    }
    Ok(0)
}

struct Service {
    cfg: EngineConfig,
}

async fn infer(State(s): State<Arc<Service>>, body: Bytes) -> impl IntoResponse {
    let (status, j) = match answer(&s.cfg, &body) {
        Reply::Ok(j) => (StatusCode::OK, j),
        Reply::Engine(j) => (StatusCode::UNPROCESSABLE_ENTITY, j),
        Reply::BadRequest(j) => (StatusCode::BAD_REQUEST, j),
    };
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        j.to_string(),
    )
}

async fn health(State(s): State<Arc<Service>>) -> impl IntoResponse {
    let j = json!({
        "status": "ok",
        "rules": {
            "maneuver": s.cfg.maneuver_theory().len(),
            "parameter": s.cfg.parameter_theory().len(),
        },
    });
    ([(header::CONTENT_TYPE, "application/json")], j.to_string())
}

/// Prints `{"listening": addr}` once bound, then serves until killed.
pub fn http(cfg: EngineConfig, addr: SocketAddr) -> Result<u8, Failure> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::input("runtime", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::input("bind", format!("{addr}: {e}")))?;
        let local = listener
            .local_addr()
            .map_err(|e| Failure::input("bind", e))?;
        println!("{}", json!({ "listening": local.to_string() }));
        let _ = std::io::stdout().flush();
        let app = Router::new()
            .route("/infer", post(infer))
            .route("/health", get(health))
            .with_state(Arc::new(Service { cfg }));
        axum::serve(listener, app)
            .await
            .map_err(|e| Failure::input("serve", e))?;
        Ok(0)
    })
}
