use std::collections::HashMap;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cfsearch_core::causality::{CausalityMatrix, SIGNIFICANCE};
use cfsearch_core::scenario::Evaluator;
use cfsearch_core::series::format_timestamp;
use serde::Serialize;
use serde_json::json;

use crate::error::ApiError;
use crate::requests::{parse_json, ProjectRequest, SearchRequest, DEFAULT_HORIZON};
use crate::{AppState, Loaded};

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/series/meta", get(series_meta))
        .route("/series/window", get(series_window))
        .route("/causality", get(causality))
        .route("/search", post(submit_search))
        .route("/search/{id}", get(search_job))
        .route("/search/{id}/trace", get(search_trace))
        .route("/project", post(project));
    Router::new()
        .nest("/api/v1", api)
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(middleware::from_fn(log_request))
        .with_state(state)
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let start = Instant::now();
    let response = next.run(req).await;
    tracing::info!(
        %method,
        %path,
        status = response.status().as_u16(),
        micros = start.elapsed().as_micros() as u64,
        "request"
    );
    response
}

fn loaded(state: &AppState) -> Result<&Loaded, ApiError> {
    state.data.as_ref().ok_or_else(ApiError::no_bundle)
}

fn json_text(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], Body::from(text)).into_response()
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let (variables, target) = match &state.data {
        Some(d) => (d.bundle.n_vars(), Some(d.bundle.names[d.bundle.target].clone())),
        None => (0, None),
    };
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "variables": variables,
        "target": target,
        "active_jobs": state.jobs.active(),
    }))
}

async fn series_meta(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let d = loaded(&state)?;
    let b = &d.bundle;
    Ok(Json(json!({
        "names": b.names,
        "delta_seconds": b.delta_seconds,
        "target": b.names[b.target],
        "target_index": b.target,
        "actionable": b.actionable,
        "length": d.history.len(),
        "lag_order": b.lag_order,
        "levels": b.levels,
        "default_horizon": DEFAULT_HORIZON,
    })))
}

fn positive_param(params: &HashMap<String, String>, name: &str, default: Option<i64>) -> Result<i64, ApiError> {
    let value = match (params.get(name), default) {
        (Some(raw), _) => raw
            .parse::<i64>()
            .map_err(|_| ApiError::invalid(name, format!("not an integer: {raw:?}")))?,
        (None, Some(d)) => d,
        (None, None) => return Err(ApiError::invalid(name, "required")),
    };
    Ok(value)
}

async fn series_window(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let d = loaded(&state)?;
    let last = positive_param(&params, "last", None)?;
    if last <= 0 {
        return Err(ApiError::invalid("last", format!("must be positive, got {last}")));
    }
    let window = d.history.tail(last as usize);
    let timestamps: Vec<String> = window.timestamps().iter().map(|&t| format_timestamp(t)).collect();
    Ok(Json(json!({
        "names": window.names(),
        "target": window.target_name(),
        "rows": window.len(),
        "timestamps": timestamps,
        "columns": window.columns(),
    })))
}

#[derive(Serialize)]
struct CausalityDocument<'a> {
    convention: &'static str,
    significance: f64,
    #[serde(flatten)]
    matrix: &'a CausalityMatrix,
}

async fn causality(State(state): State<AppState>) -> Result<Response, ApiError> {
    let d = loaded(&state)?;
    let doc = CausalityDocument {
        convention: "p_values[cause][effect]: rows are causes, columns are effects; diagonal is null",
        significance: SIGNIFICANCE,
        matrix: &d.bundle.causality,
    };
    Ok(Json(doc).into_response())
}

async fn submit_search(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let d = loaded(&state)?.clone();
    let request: SearchRequest = parse_json(&headers, &body)?;
    let (goal, config) = request.resolve(d.history.len())?;
    let job = state.jobs.submit(d, request, goal, config)?;
    tracing::info!(job = %job.id, seed = config.seed, "search submitted");
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, format!("/api/v1/search/{}", job.id))],
        Json(json!({ "id": job.id, "state": job.state() })),
    )
        .into_response())
}

async fn search_job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = state
        .jobs
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))?;
    let text = job.document_json().map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(json_text(text))
}

async fn search_trace(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let job = state
        .jobs
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))?;
    let from = positive_param(&params, "from", Some(0))?;
    if from < 0 {
        return Err(ApiError::invalid("from", format!("must be nonnegative, got {from}")));
    }
    let text = job
        .trace_json(from as usize)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(json_text(text))
}

async fn project(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let d = loaded(&state)?.clone();
    let request: ProjectRequest = parse_json(&headers, &body)?;
    let (goal, weights) = request.resolve(d.bundle.n_vars(), d.history.len())?;
    let report = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let ev = Evaluator::new(&d.bundle, &d.history, goal, weights)
            .map_err(|e| ApiError::invalid("policy", e.to_string()))?;
        let policy = ev
            .space()
            .policy_from_levels(&request.policy)
            .map_err(|e| ApiError::invalid("policy", e.to_string()))?;
        ev.report(&policy)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "projection_failed", e.to_string()))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(report).into_response())
}
