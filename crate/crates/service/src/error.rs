use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use matrixgate::constraints::ValidationError;
use matrixgate::engine::{EngineError, SpecError};
use matrixgate::io::ParseError;
use matrixgate::pipeline::PipelineError;
use serde_json::json;

/// Error response: `{ "error": <kind>, "message": <text> }` plus optional detail.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }

    fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.kind, "message": self.message });
        if let Some(detail) = self.detail {
            body["detail"] = detail;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        let mut err = ApiError::new(StatusCode::BAD_REQUEST, e.kind(), e.to_string());
        if let ParseError::Syntax { line, column, .. } = e {
            err = err.with_detail(json!({ "line": line, "column": column }));
        }
        err
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string())
    }
}

impl From<SpecError> for ApiError {
    fn from(e: SpecError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_workflow", e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::MaxIterationsExceeded { step, iterations, findings } => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "max_iterations_exceeded",
                format!("step {step} still fails after {iterations} iteration(s)"),
            )
            .with_detail(json!({ "step": step, "findings": findings })),
            PipelineError::InvalidMatrix(report) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_matrix",
                "matrix has error findings",
            )
            .with_detail(serde_json::to_value(&report).unwrap_or_default()),
            other => ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", other.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let (status, kind) = match &e {
            EngineError::UnknownTask(_) => (StatusCode::NOT_FOUND, "not_found"),
            EngineError::IllegalTransition { .. } => (StatusCode::CONFLICT, "illegal_transition"),
            EngineError::UnauthorizedVerdict { .. } => (StatusCode::FORBIDDEN, "unauthorized_verdict"),
            EngineError::UnauthorizedActor { .. } => (StatusCode::FORBIDDEN, "unauthorized_actor"),
            EngineError::MissingConsultation { .. } => (StatusCode::CONFLICT, "missing_consultation"),
            EngineError::WrongWorkSource { .. } => (StatusCode::CONFLICT, "wrong_work_source"),
            EngineError::AdapterFailure { .. } => (StatusCode::BAD_GATEWAY, "adapter_failure"),
            EngineError::Spec(_) => (StatusCode::BAD_REQUEST, "invalid_workflow"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}
