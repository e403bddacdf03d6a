//! Request bodies. Unknown fields are rejected and every validation failure
//! names the offending field.

use axum::http::{header, HeaderMap, StatusCode};
use cfsearch_core::ga::GaConfig;
use cfsearch_core::scenario::{FitnessWeights, GoalSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Default horizon: 30 seconds at a 3 second cadence.
pub const DEFAULT_HORIZON: usize = 10;

fn default_tolerance() -> f64 {
    0.05
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsBody {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl WeightsBody {
    fn into_weights(self) -> Result<FitnessWeights, ApiError> {
        let w = FitnessWeights {
            w1: self.w1,
            w2: self.w2,
            w3: self.w3,
        };
        w.validate().map_err(|e| ApiError::invalid("weights", e.to_string()))?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub goal: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossover_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tournament_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub immigrant_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elitism_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsBody>,
}

fn probability(field: &str, p: f64) -> Result<f64, ApiError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ApiError::invalid(field, format!("must lie in [0, 1], got {p}")))
    }
}

fn goal_spec(goal: f64, tolerance: f64, horizon: usize, history_len: usize) -> Result<GoalSpec, ApiError> {
    if !goal.is_finite() {
        return Err(ApiError::invalid("goal", "must be finite"));
    }
    if !(tolerance > 0.0) {
        return Err(ApiError::invalid("tolerance", format!("must be positive, got {tolerance}")));
    }
    if horizon == 0 {
        return Err(ApiError::invalid("horizon", "must be at least 1"));
    }
    if horizon > history_len {
        return Err(ApiError::invalid(
            "horizon",
            format!("exceeds the {history_len} observed rows used as the similarity reference"),
        ));
    }
    Ok(GoalSpec {
        goal_value: goal,
        epsilon_rel: tolerance,
        horizon_steps: horizon,
    })
}

impl SearchRequest {
    /// Validated search inputs.
    pub fn resolve(&self, history_len: usize) -> Result<(GoalSpec, GaConfig), ApiError> {
        let goal = goal_spec(self.goal, self.tolerance, self.horizon, history_len)?;
        let d = GaConfig::default();
        let config = GaConfig {
            population_size: self.population_size.unwrap_or(d.population_size),
            mutation_prob: probability("mutation_prob", self.mutation_prob.unwrap_or(d.mutation_prob))?,
            crossover_prob: probability("crossover_prob", self.crossover_prob.unwrap_or(d.crossover_prob))?,
            tournament_size: self.tournament_size.unwrap_or(d.tournament_size),
            immigrant_rate: probability("immigrant_rate", self.immigrant_rate.unwrap_or(d.immigrant_rate))?,
            max_generations: self.max_generations.unwrap_or(d.max_generations),
            tolerance_rel: self.tolerance,
            weights: match self.weights {
                Some(w) => w.into_weights()?,
                None => d.weights,
            },
            seed: self.seed,
            elitism_count: self.elitism_count.unwrap_or(d.elitism_count),
        };
        if config.tournament_size == 0 {
            return Err(ApiError::invalid("tournament_size", "must be at least 1"));
        }
        if config.population_size < config.tournament_size {
            return Err(ApiError::invalid(
                "population_size",
                format!("must be at least tournament_size ({})", config.tournament_size),
            ));
        }
        if config.elitism_count >= config.population_size {
            return Err(ApiError::invalid("elitism_count", "must be smaller than population_size"));
        }
        config
            .validate()
            .map_err(|e| ApiError::invalid("config", e.to_string()))?;
        Ok((goal, config))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectRequest {
    pub goal: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// `policy[v][n]`: quantile level for variable `v` at step `n + 1`.
    pub policy: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsBody>,
}

impl ProjectRequest {
    pub fn resolve(&self, n_vars: usize, history_len: usize) -> Result<(GoalSpec, FitnessWeights), ApiError> {
        if self.policy.len() != n_vars {
            return Err(ApiError::invalid(
                "policy",
                format!("expected {n_vars} rows, got {}", self.policy.len()),
            ));
        }
        let horizon = self.policy[0].len();
        if self.policy.iter().any(|row| row.len() != horizon) {
            return Err(ApiError::invalid("policy", "rows differ in length"));
        }
        if horizon == 0 {
            return Err(ApiError::invalid("policy", "rows must hold at least one step"));
        }
        let goal = goal_spec(self.goal, self.tolerance, horizon, history_len)
            .map_err(|e| if e.field.as_deref() == Some("horizon") { ApiError { field: Some("policy".into()), ..e } } else { e })?;
        let weights = match self.weights {
            Some(w) => w.into_weights()?,
            None => FitnessWeights::default(),
        };
        Ok((goal, weights))
    }
}

fn field_of(path: &str, message: &str) -> Option<String> {
    for marker in ["unknown field `", "missing field `"] {
        if let Some(start) = message.find(marker) {
            let rest = &message[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                let name = &rest[..end];
                return Some(if path == "." || path.is_empty() {
                    name.to_string()
                } else if path == name || path.ends_with(&format!(".{name}")) {
                    path.to_string()
                } else {
                    format!("{path}.{name}")
                });
            }
        }
    }
    (path != "." && !path.is_empty()).then(|| path.to_string())
}

/// Strict JSON body parsing with field-level errors.
pub fn parse_json<T: DeserializeOwned>(headers: &HeaderMap, body: &[u8]) -> Result<T, ApiError> {
    let json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(';').next().is_some_and(|m| m.trim() == "application/json"));
    if !json {
        return Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "unsupported_media_type",
            "content type must be application/json",
        ));
    }
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let detail = e.inner().to_string();
        ApiError {
            field: field_of(&path, &detail),
            ..ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", detail)
        }
    })
}
