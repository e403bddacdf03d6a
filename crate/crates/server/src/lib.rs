//! JSON API under `/api/v1` for one loaded model bundle and its history.

mod error;
mod jobs;
mod requests;
mod routes;

use std::future::Future;
use std::path::Path;
use std::sync::Arc;

use axum::Router;
use cfsearch_core::bundle::ModelBundle;
use cfsearch_core::series::MultivariateSeries;
use tokio::net::TcpListener;

pub use error::ApiError;
pub use jobs::{JobRegistry, JobState, MAX_ACTIVE_JOBS};
pub use requests::{ProjectRequest, SearchRequest, WeightsBody};

/// Bundle and the history it projects from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub bundle: Arc<ModelBundle>,
    pub history: Arc<MultivariateSeries>,
}

impl Loaded {
    pub fn new(bundle: ModelBundle, history: MultivariateSeries) -> cfsearch_core::Result<Self> {
        bundle.validate()?;
        bundle.check_history(&history)?;
        Ok(Self {
            bundle: Arc::new(bundle),
            history: Arc::new(history),
        })
    }

    /// Reads a bundle JSON file and a series bundle directory.
    pub fn open(bundle: impl AsRef<Path>, series_dir: impl AsRef<Path>) -> cfsearch_core::Result<Self> {
        Self::new(
            ModelBundle::load(bundle)?,
            MultivariateSeries::load_bundle(series_dir)?,
        )
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub data: Option<Loaded>,
    pub jobs: Arc<JobRegistry>,
}

impl AppState {
    pub fn new(data: Loaded) -> Self {
        Self {
            data: Some(data),
            jobs: Arc::new(JobRegistry::new(MAX_ACTIVE_JOBS)),
        }
    }

    /// State with nothing loaded; data endpoints answer 409.
    pub fn empty() -> Self {
        Self {
            data: None,
            jobs: Arc::new(JobRegistry::new(MAX_ACTIVE_JOBS)),
        }
    }
}

pub fn router(state: AppState) -> Router {
    routes::router(state)
}

/// Serves until `shutdown` resolves, then cancels running jobs.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let jobs = state.jobs.clone();
    let app = router(state);
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    jobs.cancel_all();
    result
}
