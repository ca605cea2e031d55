//! HTTP/JSON session service.
//!
//! | method | path | body | success |
//! |---|---|---|---|
//! | GET | `/config` | | 200 client constants |
//! | POST | `/sessions` | `{student_id}` | 201 stack view |
//! | GET | `/sessions/{id}/stack` | | 200 stack view |
//! | POST | `/sessions/{id}/gesture` | `{card_id, kind: drag\|release\|tap, dx, vx, request_token?}` | 200 resolution + stack |
//! | POST | `/sessions/{id}/answer` | `{card_id, correct, elapsed_s, request_token?}` | 200 progress + stack |
//! | GET | `/sessions/{id}/progress` | | 200 progress summary |
//! | GET | `/sessions/{id}/events` | | 200 event array |
//! | POST | `/sessions/{id}/end` | | 200 stack view |
//!
//! Errors are `{error, message}` with 400 (malformed or invalid input),
//! 404 (unknown session or route), 409 (stale card, illegal transition,
//! closed session) or 500 (log failure).

pub mod api;
pub mod error;
pub mod store;

use std::sync::Arc;

use cardstack_core::student::ItemPool;
use cardstack_core::Config;

pub use api::{router, AppState};
pub use error::ApiError;

/// Loads the item pool, recovers from the event log and serves until
/// Ctrl-C.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let io = |e: cardstack_core::Error| std::io::Error::other(e.to_string());
    let pool = ItemPool::load(&config.service.item_pool_path).map_err(io)?;
    let addr = config.service.listen_addr;
    let state = AppState::open(Arc::new(pool), Arc::new(config)).map_err(io)?;
    tracing::info!(events = state.events().len(), "recovered from event log");
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
