//! Asynchronous search jobs. Each job runs on a blocking thread and appends
//! its trace under the job's lock as generations complete.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::http::StatusCode;
use cfsearch_core::ga::{run_search_with, GaConfig, SearchResult, TraceRow};
use cfsearch_core::scenario::GoalSpec;
use serde::Serialize;

use crate::error::ApiError;
use crate::requests::SearchRequest;
use crate::Loaded;

/// Jobs that may be queued or running at once; further submissions get 429.
pub const MAX_ACTIVE_JOBS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Converged,
    Exhausted,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Converged | JobState::Exhausted | JobState::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Progress {
    pub generation: usize,
    pub best_fitness: f64,
    pub best_o1_rel: f64,
    pub evaluations: usize,
}

#[derive(Debug)]
struct JobInner {
    state: JobState,
    progress: Option<Progress>,
    trace: Vec<TraceRow>,
    result: Option<SearchResult>,
    error: Option<String>,
}

#[derive(Debug)]
pub struct Job {
    pub id: String,
    pub request: SearchRequest,
    pub goal: GoalSpec,
    pub config: GaConfig,
    cancel: AtomicBool,
    inner: Mutex<JobInner>,
}

/// Serialized job view.
#[derive(Debug, Serialize)]
pub struct JobDocument<'a> {
    pub id: &'a str,
    pub state: JobState,
    pub request: &'a SearchRequest,
    pub goal: GoalSpec,
    pub config: GaConfig,
    pub progress: Option<Progress>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<&'a SearchResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<&'a str>,
}

#[derive(Debug, Serialize)]
pub struct TraceDocument<'a> {
    pub id: &'a str,
    pub state: JobState,
    pub rows: &'a [TraceRow],
    /// Cursor for the next incremental read.
    pub next_from: usize,
}

fn lock(m: &Mutex<JobInner>) -> MutexGuard<'_, JobInner> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Job {
    pub fn state(&self) -> JobState {
        lock(&self.inner).state
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Relaxed);
    }

    /// Serializes the job while holding its lock.
    pub fn document_json(&self) -> serde_json::Result<String> {
        let inner = lock(&self.inner);
        serde_json::to_string(&JobDocument {
            id: &self.id,
            state: inner.state,
            request: &self.request,
            goal: self.goal,
            config: self.config,
            progress: inner.progress,
            result: inner.result.as_ref(),
            error: inner.error.as_deref(),
        })
    }

    /// Trace rows with generation `>= from`.
    pub fn trace_json(&self, from: usize) -> serde_json::Result<String> {
        let inner = lock(&self.inner);
        let start = inner.trace.partition_point(|r| r.generation < from);
        serde_json::to_string(&TraceDocument {
            id: &self.id,
            state: inner.state,
            rows: &inner.trace[start..],
            next_from: inner.trace.last().map_or(0, |r| r.generation + 1).max(from),
        })
    }

    fn run(&self, data: &Loaded) {
        lock(&self.inner).state = JobState::Running;
        let outcome = run_search_with(&data.bundle, &data.history, &self.goal, &self.config, |row| {
            let mut inner = lock(&self.inner);
            inner.progress = Some(Progress {
                generation: row.generation,
                best_fitness: row.best_fitness,
                best_o1_rel: row.best_o1_rel,
                evaluations: row.evaluations,
            });
            inner.trace.push(row.clone());
            !self.cancel.load(Ordering::Relaxed)
        });
        let cancelled = self.cancel.load(Ordering::Relaxed);
        let mut inner = lock(&self.inner);
        match outcome {
            Ok(result) if !cancelled || result.converged => {
                inner.state = if result.converged {
                    JobState::Converged
                } else {
                    JobState::Exhausted
                };
                inner.result = Some(result);
            }
            Ok(_) => {
                inner.state = JobState::Failed;
                inner.error = Some("cancelled".into());
            }
            Err(e) => {
                tracing::warn!(job = %self.id, error = %e, "search failed");
                inner.state = JobState::Failed;
                inner.error = Some(e.to_string());
            }
        }
    }
}

#[derive(Debug)]
pub struct JobRegistry {
    limit: usize,
    next: AtomicU64,
    jobs: Mutex<HashMap<String, Arc<Job>>>,
}

impl JobRegistry {
    pub fn new(limit: usize) -> Self {
        Self {
            limit,
            next: AtomicU64::new(1),
            jobs: Mutex::new(HashMap::new()),
        }
    }

    fn map(&self) -> MutexGuard<'_, HashMap<String, Arc<Job>>> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn get(&self, id: &str) -> Option<Arc<Job>> {
        self.map().get(id).cloned()
    }

    pub fn active(&self) -> usize {
        self.map().values().filter(|j| !j.state().is_terminal()).count()
    }

    /// Registers a job and starts it on a blocking thread.
    pub fn submit(
        &self,
        data: Loaded,
        request: SearchRequest,
        goal: GoalSpec,
        config: GaConfig,
    ) -> Result<Arc<Job>, ApiError> {
        let job = {
            let mut map = self.map();
            let active = map.values().filter(|j| !j.state().is_terminal()).count();
            if active >= self.limit {
                return Err(ApiError::new(
                    StatusCode::TOO_MANY_REQUESTS,
                    "queue_full",
                    format!("{active} search jobs are already active (limit {})", self.limit),
                ));
            }
            let n = self.next.fetch_add(1, Ordering::Relaxed);
            let job = Arc::new(Job {
                id: format!("job-{n:06}"),
                request,
                goal,
                config,
                cancel: AtomicBool::new(false),
                inner: Mutex::new(JobInner {
                    state: JobState::Queued,
                    progress: None,
                    trace: Vec::new(),
                    result: None,
                    error: None,
                }),
            });
            map.insert(job.id.clone(), job.clone());
            job
        };
        let worker = job.clone();
        tokio::task::spawn_blocking(move || worker.run(&data));
        Ok(job)
    }

    pub fn cancel_all(&self) {
        for job in self.map().values() {
            job.cancel();
        }
    }
}
