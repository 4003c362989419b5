//! HTTP contract of the service, driven in-process against the bundled fixtures.

mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use seagrounded::dispatch::{FunctionDescriptor, ParamSpec, SemanticType};
use seagrounded::engine::Engine;
use seagrounded::model::{ResponseMeta, ToolResponse};
use seagrounded::service::router;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

fn app() -> (Router, TempDir) {
    let (engine, dir) = common::replay_engine();
    (router(Arc::new(engine)), dir)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>, Option<String>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    (status, bytes, ctype)
}

async fn post_query(app: &Router, body: &str) -> (StatusCode, Value) {
    let req = Request::post("/api/query")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes, _) = send(app, req).await;
    (status, serde_json::from_slice(&bytes).expect("JSON body"))
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>, Option<String>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

#[tokio::test]
async fn empty_and_malformed_bodies_are_400_with_param() {
    let (app, _dir) = app();
    let (s, v) = post_query(&app, r#"{"text": "   "}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "EmptyQuery");
    assert_eq!(v["param"], "text");

    let (s, v) = post_query(&app, "not json").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["param"], "body");

    let (s, v) = post_query(&app, r#"{"text": "hi", "mode": "psychic"}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["param"], "mode");
}

#[tokio::test]
async fn unknown_location_is_422_with_diagnostic() {
    let (app, _dir) = app();
    let (s, v) = post_query(&app, r#"{"text": "What was the water level in Atlantis in May 2020?"}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "UnknownLocation");
    assert!(v["diagnostic"].as_str().unwrap().contains("Atlantis"), "{v}");
}

#[tokio::test]
async fn model_backed_without_model_is_rejected() {
    let (app, _dir) = app();
    let (s, v) = post_query(
        &app,
        r#"{"text": "What is the maximum water level in Boston in 2024?", "mode": "model_backed"}"#,
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "ModelUnavailable");
    assert_eq!(v["param"], "mode");
}

#[tokio::test]
async fn out_of_coverage_names_begin() {
    let (app, _dir) = app();
    let (s, v) = post_query(&app, r#"{"text": "Show Boston's water level from CORA reanalysis in June 1970."}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["error"], "ArgValidation");
    let params: Vec<&str> = v["violations"].as_array().unwrap().iter().map(|x| x["param"].as_str().unwrap()).collect();
    assert!(params.contains(&"begin"), "{v}");
}

#[tokio::test]
async fn replay_miss_is_structured_upstream_failure() {
    let (app, _dir) = app();
    let (s, v) = post_query(&app, r#"{"text": "What was the water level in Seattle in May 2020?"}"#).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY, "{v}");
    assert_eq!(v["error"], "UpstreamFailure");
    assert!(v["partial"].is_object());
}

#[tokio::test]
async fn query_returns_answer_and_figure_is_served() {
    let (app, _dir) = app();
    let (s, v) = post_query(&app, r#"{"text": "What is the maximum water level in Boston in 2024?"}"#).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["data"]["max"], json!(2.79));
    let url = v["figures"][0]["url"].as_str().unwrap().to_string();
    let (s, bytes, ctype) = get(&app, &url).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("image/svg+xml"));
    assert!(bytes.starts_with(b"<svg") || bytes.starts_with(b"<?xml"));
}

#[tokio::test]
async fn missing_figure_and_route_are_json_404() {
    let (app, _dir) = app();
    let (s, bytes, ctype) = get(&app, "/figures/0000.svg").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(ctype.as_deref(), Some("application/json"));
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["error"], "NotFound");

    let (s, _, _) = get(&app, "/api/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn health_reports_replay_and_corpus() {
    let (app, _dir) = app();
    let (s, bytes, _) = get(&app, "/api/health").await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["transport_mode"], "Replay");
    assert_eq!(v["functions"], 5);
    assert_eq!(v["web_search"], "stub");
    assert!(v["corpus_chunks"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn cors_allows_configured_origin() {
    let (app, _dir) = app();
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/api/query")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "http://localhost:5173"
    );
}

fn tide_range_descriptor() -> FunctionDescriptor {
    FunctionDescriptor {
        name: "get_tide_range".into(),
        summary: "Placeholder used to test registration.".into(),
        params: vec![ParamSpec::required("station", SemanticType::StationRef, "Station name or id")],
        variable: None,
        handler: Arc::new(|args, _| {
            Ok(ToolResponse {
                text: format!("station {}", args.str("station")),
                images: vec![],
                json_data: Value::Null,
                others: ResponseMeta {
                    function: String::new(),
                    arguments: Default::default(),
                    unit: None,
                    time_span: None,
                    provenance: vec![],
                    errors: vec![],
                },
            })
        }),
    }
}

#[tokio::test]
async fn registering_a_function_extends_the_schema_list() {
    let (app, _dir) = app();
    let (_, bytes, _) = get(&app, "/api/functions").await;
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 5);

    let dir = tempfile::tempdir().unwrap();
    let engine = Engine::from_config_with(common::replay_config(dir.path()), |r| r.register(tide_range_descriptor())).unwrap();
    let app = router(Arc::new(engine));
    let (_, bytes, _) = get(&app, "/api/functions").await;
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|f| f["function"]["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 6);
    assert!(names.contains(&"get_tide_range"));
}
