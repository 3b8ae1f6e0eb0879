use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    ProviderUnavailable,
    SandboxUnavailable,
    Forbidden,
}

/// Error body for every route: `{ code, message, retryable }`, plus a
/// machine-readable `reason` on privacy refusals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub retryable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ApiError {
    fn new(code: ErrorCode, message: impl Into<String>, retryable: bool) -> Self {
        Self { code, message: message.into(), retryable, reason: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message, false)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message, false)
    }

    pub fn provider_unavailable(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::ProviderUnavailable, message, true)
    }

    pub fn sandbox_unavailable(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::SandboxUnavailable, message, true)
    }

    pub fn forbidden(message: impl Into<String>, reason: &str) -> Self {
        Self { reason: Some(reason.to_owned()), ..Self::new(ErrorCode::Forbidden, message, false) }
    }

    pub fn status(&self) -> StatusCode {
        match self.code {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::ProviderUnavailable | ErrorCode::SandboxUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::Forbidden => StatusCode::FORBIDDEN,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shape() {
        let v = serde_json::to_value(ApiError::sandbox_unavailable("down")).unwrap();
        assert_eq!(v, serde_json::json!({"code": "sandbox_unavailable", "message": "down", "retryable": true}));
        let v = serde_json::to_value(ApiError::forbidden("no", "individual_data")).unwrap();
        assert_eq!(v["reason"], "individual_data");
        assert_eq!(v["retryable"], false);
    }

    #[test]
    fn statuses() {
        assert_eq!(ApiError::bad_request("x").status(), StatusCode::BAD_REQUEST);
        assert_eq!(ApiError::not_found("x").status(), StatusCode::NOT_FOUND);
        assert_eq!(ApiError::provider_unavailable("x").status(), StatusCode::SERVICE_UNAVAILABLE);
        assert_eq!(ApiError::forbidden("x", "r").status(), StatusCode::FORBIDDEN);
    }
}
