#![allow(dead_code)]

use axum::body::{Body, Bytes};
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use outcrop_core::texgen::{default_templates, generate, Family};
use outcrop_core::ImageBuffer;
use outcrop_service::{router, AppState, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

pub fn tex(family: Family, seed: u64) -> ImageBuffer {
    let template = default_templates(64, 12)
        .into_iter()
        .find(|t| t.family == family)
        .unwrap();
    generate(&template.with_seed(seed)).unwrap()
}

pub fn png(family: Family, seed: u64) -> Vec<u8> {
    tex(family, seed).to_png()
}

pub fn app(root: &std::path::Path) -> Router {
    router(AppState::new(ServiceConfig::new(root)))
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Bytes) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes())
}

pub async fn send_json(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (status, body) = send(app, req).await;
    let v = if body.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&body).unwrap_or(Value::Null)
    };
    (status, v)
}

pub fn post(uri: &str, body: impl Into<Body>) -> Request<Body> {
    Request::post(uri).body(body.into()).unwrap()
}

pub fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

pub async fn new_session(app: &Router, body: &str) -> String {
    let (status, v) = send_json(app, post("/sessions", body.to_string())).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

pub async fn upload(app: &Router, session: &str, bytes: Vec<u8>) -> (StatusCode, Value) {
    send_json(app, post(&format!("/sessions/{session}/images"), bytes)).await
}
