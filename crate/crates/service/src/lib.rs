//! HTTP service for authoring practice suites and running tutoring
//! sessions, backed by a single-file store.

pub mod api;
pub mod config;
pub mod error;
pub mod store;

use std::sync::Arc;

use hypocompass::harness::{CachedExecutor, HarnessError, PythonHarness};
use hypocompass::pipeline::BackendError;

pub use api::{router, AppState, Caller, Clock, Role, SessionView};
pub use config::{ConfigError, ServiceConfig, Tokens};
pub use error::ApiError;
pub use store::{Store, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server stopped: {0}")]
    Serve(std::io::Error),
}

impl ServiceError {
    /// Configuration and validation problems, as opposed to failures of the
    /// environment (files, sockets, interpreter).
    pub fn is_validation(&self) -> bool {
        matches!(self, ServiceError::Config(ConfigError::Invalid { .. }))
    }
}

/// Opens the store and builds the executor and backend named in `config`.
pub fn build_state(config: &ServiceConfig) -> Result<AppState, ServiceError> {
    let store = Store::open(&config.store_path)?;
    let exec = CachedExecutor::new(PythonHarness::new(config.harness.clone())?);
    let backend = config.backend.build()?;
    Ok(AppState::new(store, Arc::new(exec), Arc::from(backend), config.pipeline.clone(), config.tokens.clone()))
}

pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(build_state(&config)?);
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.bind.to_string(), source })?;
    tracing::info!("listening on {}", config.bind);
    axum::serve(listener, router(state)).await.map_err(ServiceError::Serve)
}
