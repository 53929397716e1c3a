use axum::extract::rejection::QueryRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use platter_core::dataset::DatasetError;
use platter_core::eval::EvalError;
use platter_core::nutrition::NutritionError;
use platter_core::ParseError;
use serde_json::json;

use crate::store::StoreError;

/// An error response: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    /// A parse failure inside one named file of an upload.
    pub fn parse(file: &str, err: &ParseError) -> Self {
        Self::unprocessable("parse_error", format!("{file}: {err}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<NutritionError> for ApiError {
    fn from(e: NutritionError) -> Self {
        let status = match e {
            NutritionError::UnknownUser(_) => StatusCode::NOT_FOUND,
            NutritionError::DuplicateUser(_) | NutritionError::NoGoal(_) => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Domain(d) => d.into(),
            StoreError::KeyReused(_) => Self::new(
                StatusCode::CONFLICT,
                "idempotency_key_reused",
                e.to_string(),
            ),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => {
                tracing::error!(error = %e, "storage failure");
                Self::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "storage_error",
                    e.to_string(),
                )
            }
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        let code = match e {
            EvalError::NoEvaluableClasses => "no_evaluable_classes",
            EvalError::InvalidThreshold { .. } => "invalid_threshold",
            EvalError::UnknownImage(_) => "unknown_image",
            EvalError::DuplicateDetections(_) => "duplicate_detections",
            EvalError::ClassOutOfRange { .. } => "class_out_of_range",
            _ => "invalid_evaluation",
        };
        Self::unprocessable(code, e.to_string())
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        Self::unprocessable("invalid_dataset", e.to_string())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text())
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        let code = if e.is_data() {
            "invalid_body"
        } else {
            "invalid_json"
        };
        Self::new(StatusCode::BAD_REQUEST, code, e.to_string())
    }
}
