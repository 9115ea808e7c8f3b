//! HTTP routes. Bodies are parsed by hand so malformed JSON is a 400 with
//! the usual error body rather than the framework's own rejection.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{ApiError, ApiResult};
use crate::schema;
use crate::service::Studio;
use crate::store::Concept;
use crate::types::*;

type Shared = State<Arc<Studio>>;

pub fn router(studio: Arc<Studio>) -> Router {
    Router::new()
        .route("/concepts", post(create_concept).get(list_concepts))
        .route("/concepts/{id}", get(get_concept))
        .route("/concepts/{id}/train", post(train_concept))
        .route("/jobs/{id}", get(get_job))
        .route("/queries/compose", post(compose))
        .route("/queries/preview", post(preview))
        .route("/queries/retrieve", post(retrieve))
        .route("/queries/gair", post(gair))
        .route("/indexes", post(create_index))
        .route("/indexes/{id}", get(get_index))
        .route("/images/{hash}", get(get_image))
        .route("/previews/{hash}", get(get_preview))
        .route("/schema", get(schema_names))
        .route("/schema/{name}", get(schema_by_name))
        .fallback(|| async { ApiError::NotFound("no such route".into()) })
        .with_state(studio)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    if body.is_empty() {
        return serde_json::from_slice(b"{}").map_err(|e| ApiError::BadRequest(format!("request body: {e}")));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("request body: {e}")))
}

/// Runs CPU-heavy work off the async workers.
async fn blocking<T, F>(studio: Arc<Studio>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Studio) -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&studio))
        .await
        .map_err(|e| ApiError::Internal(format!("worker panicked: {e}")))?
}

fn json<T: Serialize>(status: StatusCode, value: T) -> Response {
    (status, Json(value)).into_response()
}

async fn create_concept(State(studio): Shared, body: Bytes) -> ApiResult<Response> {
    let request: IngestRequest = parse(&body)?;
    let concept = blocking(studio, move |s| s.ingest(&request)).await?;
    Ok(json(StatusCode::CREATED, concept))
}

async fn list_concepts(State(studio): Shared) -> ApiResult<Json<Vec<Concept>>> {
    Ok(Json(studio.store.concepts()?))
}

async fn get_concept(State(studio): Shared, Path(id): Path<String>) -> ApiResult<Json<Concept>> {
    Ok(Json(studio.store.concept(&id)?))
}

async fn train_concept(State(studio): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let request: TrainRequest = parse(&body)?;
    let job = studio.start_train_job(&id, request)?;
    Ok(json(StatusCode::ACCEPTED, job))
}

async fn get_job(State(studio): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(json(StatusCode::OK, studio.job(&id)?))
}

async fn compose(State(studio): Shared, body: Bytes) -> ApiResult<Json<ComposeResponse>> {
    let request: QuerySpec = parse(&body)?;
    Ok(Json(blocking(studio, move |s| s.compose(&request)).await?))
}

async fn preview(State(studio): Shared, body: Bytes) -> ApiResult<Json<PreviewResponse>> {
    let request: PreviewRequest = parse(&body)?;
    Ok(Json(blocking(studio, move |s| s.preview(&request)).await?))
}

async fn retrieve(State(studio): Shared, body: Bytes) -> ApiResult<Json<RetrieveResponse>> {
    let request: RetrieveRequest = parse(&body)?;
    Ok(Json(blocking(studio, move |s| s.retrieve(&request)).await?))
}

async fn gair(State(studio): Shared, body: Bytes) -> ApiResult<Response> {
    let request: GairRequestBody = parse(&body)?;
    if request.run_async {
        let job = studio.start_gair_job(request)?;
        return Ok(json(StatusCode::ACCEPTED, job));
    }
    Ok(json(StatusCode::OK, blocking(studio, move |s| s.gair(&request)).await?))
}

async fn create_index(State(studio): Shared, body: Bytes) -> ApiResult<Response> {
    let request: IndexRequest = parse(&body)?;
    let info = blocking(studio, move |s| s.build_index_from_request(&request)).await?;
    Ok(json(StatusCode::CREATED, info))
}

async fn get_index(State(studio): Shared, Path(id): Path<String>) -> ApiResult<Json<IndexInfo>> {
    Ok(Json(studio.index_info(&id)?))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "public, max-age=31536000, immutable")], bytes)
        .into_response()
}

async fn get_image(State(studio): Shared, Path(hash): Path<String>) -> ApiResult<Response> {
    Ok(png(studio.store.image_png(&hash)?))
}

async fn get_preview(State(studio): Shared, Path(hash): Path<String>) -> ApiResult<Response> {
    Ok(png(studio.store.preview_png(&hash)?))
}

async fn schema_names() -> Json<Vec<&'static str>> {
    Json(schema::names())
}

async fn schema_by_name(Path(name): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    schema::by_name(&name).map(Json).ok_or_else(|| ApiError::NotFound(format!("no schema named {name:?}")))
}

/// Serves until Ctrl-C.
pub async fn serve(studio: Arc<Studio>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(studio))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
