use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use custom_tokens::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    /// Malformed or schema-violating request.
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("concept {0} already has a training job in progress")]
    ConceptBusy(String),
    #[error(transparent)]
    Library(#[from] CoreError),
    #[error("{0}")]
    Internal(String),
}

pub type ApiResult<T> = Result<T, ApiError>;

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::ConceptBusy(_) => StatusCode::CONFLICT,
            ApiError::Library(e) => match e {
                CoreError::Io(_) | CoreError::Json(_) | CoreError::Format(_) | CoreError::NonFiniteLoss { .. } => {
                    StatusCode::INTERNAL_SERVER_ERROR
                }
                CoreError::Unsupported(_) => StatusCode::NOT_IMPLEMENTED,
                _ => StatusCode::BAD_REQUEST,
            },
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "bad_request",
            ApiError::NotFound(_) => "not_found",
            ApiError::ConceptBusy(_) => "concept_busy",
            ApiError::Library(_) if self.status() == StatusCode::BAD_REQUEST => "invalid_input",
            ApiError::Library(_) | ApiError::Internal(_) => "internal",
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(ErrorBody { error: self.code(), message: self.to_string() })).into_response()
    }
}
