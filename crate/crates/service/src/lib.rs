//! HTTP session service: upload PDFs, list detected figures, extract and edit tables, export.

pub mod api;
mod config;
mod error;
pub mod multipart;
pub mod store;

use std::net::SocketAddr;
use std::time::Duration;

pub use api::{router, AppState};
pub use config::{ServiceConfig, ServiceConfigFile, DEFAULT_MAX_UPLOAD, DEFAULT_TTL};
pub use error::{ErrorBody, ServiceError};

pub const GC_INTERVAL: Duration = Duration::from_secs(3600);

/// Removes expired sessions every `every` until the runtime shuts down.
pub fn spawn_gc(state: AppState, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.tick().await;
        loop {
            tick.tick().await;
            state.store().gc(chrono::Utc::now());
        }
    })
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = AppState::new(config)?;
    spawn_gc(state.clone(), GC_INTERVAL);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Config(format!("bind {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| ServiceError::Internal(e.to_string()))?;
    tracing::info!(addr = %local, root = %state.store().root().display(), "listening");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}
