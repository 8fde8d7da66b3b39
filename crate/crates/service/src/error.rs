use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hypocompass::pipeline::{FinalizeError, PipelineError};
use hypocompass::tutor::TutorError;
use serde_json::json;

use crate::store::StoreError;

/// An error body of the form `{"error": {"code", "message"}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.to_string(), message: message.into() }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} {id} does not exist"))
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!("{e}");
        ApiError::internal(e.to_string())
    }
}

impl From<TutorError> for ApiError {
    fn from(e: TutorError) -> Self {
        match e {
            TutorError::Harness(h) => ApiError::internal(h.to_string()),
            TutorError::WrongPhase { .. } | TutorError::AlreadyFixed => ApiError::conflict(e.code(), e.to_string()),
            other => ApiError::unprocessable(other.code(), other.to_string()),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match e {
            PipelineError::UnknownStep(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_step", message),
            PipelineError::NotPending { .. } => ApiError::conflict("not_pending", message),
            PipelineError::Blocked { .. } => ApiError::unprocessable("blocked", message),
            PipelineError::InvalidEdit { .. } => ApiError::unprocessable("invalid_edit", message),
            PipelineError::EmptyDescription | PipelineError::InvalidExercise(_) => ApiError::unprocessable("invalid_exercise", message),
            PipelineError::Backend(_) => ApiError::new(StatusCode::BAD_GATEWAY, "backend", message),
            PipelineError::Template(_) | PipelineError::Harness(_) => ApiError::internal(message),
        }
    }
}

impl From<FinalizeError> for ApiError {
    fn from(e: FinalizeError) -> Self {
        match e {
            FinalizeError::Selection(_) => ApiError::unprocessable("selection", e.to_string()),
            FinalizeError::Invalid(_) => ApiError::unprocessable("invalid_suite", e.to_string()),
        }
    }
}
