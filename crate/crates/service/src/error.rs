use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use figtab::pdf::PdfError;
use figtab::table::TableError;
use figtab::vlm::VlmError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown figure {0}")]
    UnknownFigure(String),
    #[error("figure {0} has no table yet")]
    NoTable(String),
    #[error("malformed PDF: {0}")]
    MalformedPdf(String),
    #[error("{0}")]
    Table(#[from] TableError),
    #[error("session has no tables to export")]
    NothingToExport,
    #[error(transparent)]
    Provider(#[from] VlmError),
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("upload too large")]
    PayloadTooLarge,
    #[error("storage failure: {0}")]
    StorageFull(String),
    #[error("config: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<PdfError> for ServiceError {
    fn from(e: PdfError) -> Self {
        ServiceError::MalformedPdf(e.to_string())
    }
}

/// JSON error body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::UnknownFigure(_) => "unknown_figure",
            ServiceError::NoTable(_) => "no_table",
            ServiceError::MalformedPdf(_) => "malformed_pdf",
            ServiceError::Table(TableError::IndexOutOfBounds { .. }) => "index_out_of_bounds",
            ServiceError::Table(TableError::EmptyTable) => "empty_table",
            ServiceError::Table(TableError::Json(_)) => "invalid_table",
            ServiceError::NothingToExport => "nothing_to_export",
            ServiceError::Provider(e) => e.code(),
            ServiceError::UnknownBackend(_) => "unknown_backend",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::PayloadTooLarge => "payload_too_large",
            ServiceError::StorageFull(_) => "storage_full",
            ServiceError::Config(_) => "config_error",
            ServiceError::Internal(_) => "internal_error",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownFigure(_) | ServiceError::NoTable(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::MalformedPdf(_) | ServiceError::Table(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::NothingToExport => StatusCode::CONFLICT,
            ServiceError::Provider(e) => match e {
                VlmError::RateLimited { last_status: 429, .. } => StatusCode::TOO_MANY_REQUESTS,
                VlmError::Timeout { .. } => StatusCode::GATEWAY_TIMEOUT,
                VlmError::Image(_) => StatusCode::UNPROCESSABLE_ENTITY,
                VlmError::Config(_) => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::BAD_GATEWAY,
            },
            ServiceError::UnknownBackend(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::StorageFull(_) => StatusCode::INSUFFICIENT_STORAGE,
            ServiceError::Config(_) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::warn!(error = %self, "request failed");
        }
        let body = ErrorBody {
            error: self.code().to_string(),
            detail: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}
