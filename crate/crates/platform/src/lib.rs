//! HTTP service over the mobility analytics core, plus helpers for the CLI.

pub mod api;
pub mod config;
pub mod state;

use std::sync::Arc;

use anyhow::Context;

pub use api::router;
pub use config::ApiConfig;
pub use state::{AppState, Clock, ManualClock, SystemClock};

/// Binds, starts the feed poller and serves until Ctrl-C.
pub async fn serve(cfg: ApiConfig) -> anyhow::Result<()> {
    let bind = cfg.bind;
    let state = tokio::task::spawn_blocking(move || AppState::new(&cfg, Arc::new(SystemClock))).await??;
    let _poller = state::spawn_feed_poller(state.clone());
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .with_context(|| format!("binding {bind}"))?;
    tracing::info!(%bind, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
