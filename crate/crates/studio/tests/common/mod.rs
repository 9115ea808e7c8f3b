#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use custom_tokens::toy::ToyConcept;
use custom_tokens::Image;
use custom_tokens_studio::{api, Studio, StudioConfig};

/// A studio on a fresh temporary root with short training runs.
pub fn studio(iterations: usize) -> Arc<Studio> {
    let root = tempfile::tempdir().unwrap().keep();
    let mut config = StudioConfig { root, ..Default::default() };
    config.training.iterations = iterations;
    config.training.negatives_k = 8;
    Arc::new(Studio::open(config).unwrap())
}

pub fn concept_images(n: usize) -> Vec<Image> {
    ToyConcept::two_tone_square().images(n, 100, 16)
}

pub fn png_b64(img: &Image) -> String {
    base64::engine::general_purpose::STANDARD.encode(img.to_png().unwrap())
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body.map(|b| b.to_string().into_bytes())).await;
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

pub async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<Vec<u8>>) -> (StatusCode, Vec<u8>) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn wait_for_job(app: &Router, id: &str) -> Value {
    let start = Instant::now();
    loop {
        let (status, job) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if job["state"] == "done" || job["state"] == "failed" {
            return job;
        }
        assert!(start.elapsed() < Duration::from_secs(600), "job {id} did not finish");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

pub struct Trained {
    pub studio: Arc<Studio>,
    pub app: Router,
    pub concept_id: String,
}

/// One concept ingested and trained over HTTP, shared by the tests of a
/// binary.
pub async fn trained() -> &'static Trained {
    static CELL: tokio::sync::OnceCell<Trained> = tokio::sync::OnceCell::const_new();
    CELL.get_or_init(train_shared).await
}

async fn train_shared() -> Trained {
    let studio = studio(40);
    let app = api::router(studio.clone());
    let images: Vec<String> = concept_images(4).iter().map(png_b64).collect();
    let (status, concept) = call(&app, "POST", "/concepts", Some(json!({"parent": "square", "images": images}))).await;
    assert_eq!(status, StatusCode::CREATED, "{concept}");
    let concept_id = concept["id"].as_str().unwrap().to_string();
    let (status, job) = call(&app, "POST", &format!("/concepts/{concept_id}/train"), Some(json!({}))).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{job}");
    let job = wait_for_job(&app, job["id"].as_str().unwrap()).await;
    assert_eq!(job["state"], "done", "{job}");
    Trained { studio, app, concept_id }
}
