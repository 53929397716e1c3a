//! HTTP backend for the diet tracker and evaluation jobs.
//!
//! | method | path | body / query | result |
//! |---|---|---|---|
//! | POST | `/users` | profile | `{user_id, profile}` |
//! | GET | `/users/{id}` | | profile, goal, meals |
//! | PUT | `/users/{id}/goal` | `{formula?}` | calorie goal |
//! | POST | `/users/{id}/meals` | `{counts}` or `{detections, file_id?}`, `timestamp?` | meal log |
//! | GET | `/users/{id}/tracker` | `?at=<RFC 3339>` | tracker state |
//! | GET | `/users/{id}/history` | `?from=YYYY-MM-DD&to=YYYY-MM-DD` | days |
//! | GET | `/dishes` | | calorie table |
//! | POST | `/evaluations` | label and detection files by image id | metrics report |
//!
//! Writes accept an `Idempotency-Key` header; a retried key returns the
//! original result without writing again. Errors are
//! `{"error": {"code", "message"}}` with a 4xx status.

mod api;
mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;

use platter_core::dataset::{read_class_list, DatasetError};
use platter_core::nutrition::{BandThresholds, CalorieTable, NutritionError};
use thiserror::Error;

pub use api::{router, AppState, Catalog, CreatedUser, History, IDEMPOTENCY_HEADER};
pub use error::ApiError;
pub use store::{Store, StoreError, StoredEvent};

#[derive(Debug, Clone)]
pub struct Config {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub calorie_table: PathBuf,
    pub classes: PathBuf,
    pub confidence_threshold: f64,
    /// Events between snapshots.
    pub snapshot_every: u64,
    pub eval_workers: usize,
    pub bands: BandThresholds,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Classes(#[from] DatasetError),
    #[error(transparent)]
    Table(#[from] NutritionError),
    #[error("calorie table lists class {class_id}, but the class list has {num_classes} classes")]
    TableClassOutOfRange { class_id: usize, num_classes: usize },
    #[error("confidence threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Loads configuration files and replays the store.
pub fn build_state(config: &Config) -> Result<AppState, ServiceError> {
    if !(0.0..=1.0).contains(&config.confidence_threshold) {
        return Err(ServiceError::InvalidThreshold(config.confidence_threshold));
    }
    let registry = read_class_list(&config.classes)?;
    let table = CalorieTable::from_path(&config.calorie_table)?;
    if let Some(d) = table.dishes().find(|d| d.class_id >= registry.len()) {
        return Err(ServiceError::TableClassOutOfRange {
            class_id: d.class_id,
            num_classes: registry.len(),
        });
    }
    let missing = table.missing_classes(&registry);
    if !missing.is_empty() {
        tracing::warn!(?missing, "classes without calorie entries cannot be logged");
    }
    let store = Store::open(&config.data_dir, config.bands, config.snapshot_every)?;
    tracing::info!(seq = store.seq(), "event log replayed");
    let catalog = Catalog {
        registry,
        table,
        confidence_threshold: config.confidence_threshold,
    };
    Ok(AppState::new(store, catalog, config.eval_workers))
}

/// Serves until interrupted.
pub async fn serve(config: Config) -> Result<(), ServiceError> {
    let state = build_state(&config)?;
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
