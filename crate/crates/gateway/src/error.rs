use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use govgate_core::enactment::EnactmentError;
use govgate_core::harness::HarnessError;
use govgate_core::policy::Violation;

/// Error body of every failed request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub http_status: u16,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            http_status: status.as_u16(),
            violations: Vec::new(),
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn invalid_policy(violations: Vec<Violation>) -> Self {
        let message = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        Self { violations, ..Self::bad_request("invalid_policy", message) }
    }
}

impl From<EnactmentError> for ApiError {
    fn from(e: EnactmentError) -> Self {
        match &e {
            EnactmentError::UnknownSession(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            EnactmentError::UnknownRequest(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            EnactmentError::AlreadyResolved(_) => {
                ApiError::new(StatusCode::CONFLICT, "already_resolved", e.to_string())
            }
            EnactmentError::DuplicateSession(_) => ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            EnactmentError::IllegalTransition { .. } | EnactmentError::WrongPhase { .. } => {
                ApiError::new(StatusCode::CONFLICT, "wrong_phase", e.to_string())
            }
        }
    }
}

impl From<HarnessError> for ApiError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Enactment(e) => e.into(),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
