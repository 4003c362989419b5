//! HTTP front door.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::dispatch::{emit_function_schemas, DispatchError};
use crate::engine::Engine;
use crate::intent::ParseError;
use crate::orchestrator::{Mode, TurnError};

/// Longest accepted question, in characters.
pub const MAX_QUERY_CHARS: usize = 2000;

fn error(status: StatusCode, body: Value) -> Response {
    (status, Json(body)).into_response()
}

fn bad_request(kind: &str, param: &str, message: impl Into<String>) -> Response {
    error(
        StatusCode::BAD_REQUEST,
        json!({"error": kind, "param": param, "message": message.into()}),
    )
}

/// Validated body of `POST /api/query`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRequest {
    pub text: String,
    pub mode: Mode,
}

/// Reads a query body. Errors carry the offending field.
pub fn parse_query_body(bytes: &[u8]) -> Result<QueryRequest, (String, String, String)> {
    let err = |kind: &str, param: &str, msg: String| (kind.to_string(), param.to_string(), msg);
    let v: Value = serde_json::from_slice(bytes).map_err(|e| err("MalformedBody", "body", format!("not valid JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| err("MalformedBody", "body", "expected a JSON object".into()))?;
    let text = match obj.get("text") {
        Some(Value::String(s)) => s,
        Some(other) => return Err(err("MalformedBody", "text", format!("expected a string, got {other}"))),
        None => return Err(err("MalformedBody", "text", "missing field".into())),
    };
    if text.trim().is_empty() {
        return Err(err("EmptyQuery", "text", "question is empty".into()));
    }
    if text.chars().count() > MAX_QUERY_CHARS {
        return Err(err("MalformedBody", "text", format!("longer than {MAX_QUERY_CHARS} characters")));
    }
    let mode = match obj.get("mode") {
        None | Some(Value::Null) => Mode::Deterministic,
        Some(Value::String(s)) => s.parse().map_err(|e| err("MalformedBody", "mode", e))?,
        Some(other) => return Err(err("MalformedBody", "mode", format!("expected a string, got {other}"))),
    };
    Ok(QueryRequest {
        text: text.clone(),
        mode,
    })
}

fn parse_status(e: &ParseError) -> StatusCode {
    match e {
        ParseError::EmptyQuery => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

fn dispatch_status(e: &DispatchError) -> StatusCode {
    match e {
        DispatchError::UpstreamFailure { .. } | DispatchError::Analysis { .. } => StatusCode::BAD_GATEWAY,
        DispatchError::ArgValidation { .. } | DispatchError::InvalidQuery(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

/// Maps a turn failure to a status and a structured body.
pub fn turn_error_response(e: &TurnError) -> (StatusCode, Value) {
    match e {
        TurnError::Parse(p) => (
            parse_status(p),
            json!({"error": p.kind(), "diagnostic": p.to_string(), "message": p.to_string()}),
        ),
        TurnError::ModelUnavailable(m) => (
            StatusCode::BAD_REQUEST,
            json!({"error": "ModelUnavailable", "param": "mode", "message": m}),
        ),
        TurnError::Dispatch { error, partial } => {
            let mut body = error.to_json();
            body["partial"] = serde_json::to_value(partial.as_ref()).unwrap_or(Value::Null);
            (dispatch_status(error), body)
        }
    }
}

async fn query(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let req = match parse_query_body(&body) {
        Ok(r) => r,
        Err((kind, param, message)) => return bad_request(&kind, &param, message),
    };
    let result = tokio::task::spawn_blocking(move || engine.query(&req.text, req.mode)).await;
    match result {
        Ok(Ok(answer)) => (StatusCode::OK, Json(answer)).into_response(),
        Ok(Err(e)) => {
            let (status, body) = turn_error_response(&e);
            error(status, body)
        }
        Err(join) => error(
            StatusCode::INTERNAL_SERVER_ERROR,
            json!({"error": "Internal", "message": format!("turn aborted: {join}")}),
        ),
    }
}

async fn functions(State(engine): State<Arc<Engine>>) -> Response {
    Json(emit_function_schemas(engine.registry())).into_response()
}

async fn health(State(engine): State<Arc<Engine>>) -> Response {
    Json(engine.health()).into_response()
}

async fn figure(State(engine): State<Arc<Engine>>, Path(file): Path<String>) -> Response {
    let id = file.strip_suffix(".svg").unwrap_or(&file);
    match engine.figures.get(id) {
        Some(bytes) => ([(header::CONTENT_TYPE, "image/svg+xml")], bytes).into_response(),
        None => error(
            StatusCode::NOT_FOUND,
            json!({"error": "NotFound", "param": "hash", "message": format!("no figure '{file}'")}),
        ),
    }
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, json!({"error": "NotFound", "message": "no such endpoint"}))
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    if origins.iter().any(|o| o == "*") {
        return Some(layer.allow_origin(Any));
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    Some(layer.allow_origin(AllowOrigin::list(list)))
}

pub fn router(engine: Arc<Engine>) -> Router {
    let cors = cors(&engine.config.cors_origins);
    let router = Router::new()
        .route("/api/query", post(query))
        .route("/api/functions", get(functions))
        .route("/api/health", get(health))
        .route("/figures/:file", get(figure))
        .fallback(not_found)
        .with_state(engine);
    match cors {
        Some(layer) => router.layer(layer),
        None => router,
    }
}

/// Binds `engine.config.listen` and serves until Ctrl-C.
pub async fn serve(engine: Arc<Engine>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&engine.config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_validation_names_the_field() {
        assert_eq!(parse_query_body(b"{").unwrap_err().1, "body");
        assert_eq!(parse_query_body(b"[]").unwrap_err().1, "body");
        assert_eq!(parse_query_body(b"{}").unwrap_err().1, "text");
        assert_eq!(parse_query_body(br#"{"text": 3}"#).unwrap_err().1, "text");
        assert_eq!(parse_query_body(br#"{"text": "  "}"#).unwrap_err().0, "EmptyQuery");
        assert_eq!(parse_query_body(br#"{"text": "hi", "mode": "x"}"#).unwrap_err().1, "mode");
        let ok = parse_query_body(br#"{"text": "hi", "mode": "model_backed"}"#).unwrap();
        assert_eq!(ok.mode, Mode::ModelBacked);
    }
}
