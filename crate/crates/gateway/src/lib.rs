//! HTTP gateway over a govgate engine.
//!
//! Serves session creation and inspection, NDJSON traces, the approval queue
//! (with a long-poll watch endpoint) and policy editing. Policy edits are
//! validated before they reach the store and written back to its directory.

mod error;
mod routes;
mod state;

use std::future::Future;
use std::sync::Arc;

use tokio::net::TcpListener;

pub use error::ApiError;
pub use routes::{router, ACTOR_HEADER};
pub use state::{CreateSession, Gateway, GatewayConfig, GatewayError, PolicySummary, Run};

/// Serves the gateway on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), GatewayError> {
    axum::serve(listener, router(gateway))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(GatewayError::Serve)
}

/// Binds `addr` and serves until `shutdown` resolves.
pub async fn bind_and_serve(
    addr: &str,
    gateway: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), GatewayError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| GatewayError::Bind { addr: addr.into(), source })?;
    serve(listener, gateway, shutdown).await
}
