//! HTTP API over debate sessions: JSON endpoints under `/api/v1` and an
//! ordered server-sent event stream per session.

pub mod app;
pub mod config;
pub mod error;
pub mod views;

pub use app::{router, AppState, CreateSessionRequest, SessionDescriptor};
pub use config::{ConfigError, ServiceConfig, TransportMode};
pub use error::{ApiError, ErrorBody};

/// Binds `config.bind` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(AppState::new(config))).await
}
