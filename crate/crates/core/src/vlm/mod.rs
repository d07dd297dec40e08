//! Figure image to raw tab-separated reply, via a vision-language model.

mod client;
mod config;
mod prompt;
pub mod transport;
pub mod wire;

pub use client::*;
pub use config::*;
pub use prompt::*;
pub use transport::{MockTransport, ReqwestTransport, TranscriptEntry, Transport, TransportError};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum VlmError {
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("rate limited: gave up after {attempts} attempts (last status {last_status})")]
    RateLimited { attempts: u32, last_status: u16 },
    #[error("provider returned status {status}: {message}")]
    ProviderError { status: u16, message: String },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend config: {0}")]
    Config(String),
    #[error("image: {0}")]
    Image(String),
}

impl VlmError {
    /// Stable machine-readable kind.
    pub fn code(&self) -> &'static str {
        match self {
            VlmError::AuthError(_) => "auth_error",
            VlmError::RateLimited { .. } => "rate_limited",
            VlmError::ProviderError { .. } => "provider_error",
            VlmError::Timeout { .. } => "timeout",
            VlmError::Transport(_) => "transport_error",
            VlmError::Config(_) => "config_error",
            VlmError::Image(_) => "image_error",
        }
    }
}
