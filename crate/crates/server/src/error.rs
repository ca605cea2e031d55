use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cardstack_core::Error;
use serde::Serialize;

/// JSON error body: `{"error": <code>, "message": <text>}`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error,
                message: message.into(),
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "invalid_argument"),
            Error::Validation(_) => (StatusCode::BAD_REQUEST, "validation"),
            Error::NotFound { .. } => (StatusCode::NOT_FOUND, "not_found"),
            Error::StaleCard { .. } => (StatusCode::CONFLICT, "stale_card"),
            Error::RejectedTransition { .. } => (StatusCode::CONFLICT, "rejected_transition"),
            Error::SessionClosed(_) => (StatusCode::CONFLICT, "session_closed"),
            Error::Log(_) | Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
