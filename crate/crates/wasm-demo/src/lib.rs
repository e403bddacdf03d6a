//! Small, self-contained scenarios for the browser page. Everything here is
//! plain Rust returning serializable values; the `bindings` module only
//! exists on wasm32 and turns those values into JSON strings for JavaScript.

use cfsearch_core::bundle::{train_bundle, ModelBundle, TrainConfig};
use cfsearch_core::ga::{run_search, GaConfig};
use cfsearch_core::learners::{pinball_loss, QuantileOptions};
use cfsearch_core::scenario::{Evaluator, FitnessWeights, GoalSpec, InterventionPolicy};
use cfsearch_core::series::MultivariateSeries;
use cfsearch_core::synth::{generate_var, VarSystemSpec};
use cfsearch_core::{Error, Result};
use serde::Serialize;

#[cfg(target_arch = "wasm32")]
mod bindings;

pub const DEMO_LENGTH: usize = 600;
pub const HISTORY_SHOWN: usize = 40;

/// One driver feeding a target with a one-step delay.
pub fn demo_system() -> VarSystemSpec {
    VarSystemSpec {
        name: "driver".into(),
        names: vec!["driver".into(), "target".into()],
        coefficients: vec![vec![vec![0.6, 0.0], vec![0.8, 0.5]]],
        mean: vec![2.0, 5.0],
        noise_sigma: vec![1.0, 0.5],
        burn_in: 200,
        target: 1,
        actionable: vec![true, false],
    }
}

/// Loss of predicting `0` across residuals `lo..=hi`, as `(residual, loss)`.
pub fn pinball_curve(tau: f64, lo: f64, hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    if n < 2 || !(hi > lo) {
        return Err(Error::InvalidArgument("need n >= 2 and hi > lo".into()));
    }
    (0..n)
        .map(|i| {
            let r = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            Ok((r, pinball_loss(tau, r, 0.0)?))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Fan {
    pub levels: Vec<f64>,
    /// Last observed target values.
    pub history: Vec<f64>,
    /// `bands[n][k]`: target quantile `levels[k]` at step `n + 1`.
    pub bands: Vec<Vec<f64>>,
    /// Target path produced by the chosen driver level.
    pub path: Vec<f64>,
    pub likelihood: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchSummary {
    pub goal: f64,
    pub converged: bool,
    pub generations: usize,
    pub best_fitness: Vec<f64>,
    pub mean_fitness: Vec<f64>,
    /// Driver levels of the best policy, one per step.
    pub driver_levels: Vec<f64>,
    pub target_path: Vec<f64>,
    pub terminal: f64,
    pub likelihood_percent: f64,
}

/// Trained two-variable model kept in memory by the page.
pub struct Demo {
    series: MultivariateSeries,
    bundle: ModelBundle,
}

impl Demo {
    pub fn new(seed: u64) -> Result<Self> {
        let series = generate_var(&demo_system(), DEMO_LENGTH, seed)?;
        let config = TrainConfig {
            lag_order: 2,
            levels: vec![0.05, 0.25, 0.5, 0.75, 0.95],
            quantile: QuantileOptions {
                epochs: 200,
                learning_rate: 0.5,
            },
            n_folds: 5,
            ..TrainConfig::default()
        };
        let bundle = train_bundle(&series, &config)?;
        Ok(Self { series, bundle })
    }

    pub fn levels(&self) -> &[f64] {
        &self.bundle.levels
    }

    fn evaluator(&self, goal: f64, horizon: usize) -> Result<Evaluator<'_>> {
        Evaluator::new(
            &self.bundle,
            &self.series,
            GoalSpec::new(goal, 0.05, horizon)?,
            FitnessWeights::default(),
        )
    }

    /// Projects the target while holding the driver at `levels[level]`.
    pub fn fan(&self, level: usize, horizon: usize) -> Result<Fan> {
        if level >= self.bundle.levels.len() {
            return Err(Error::InvalidArgument(format!("level index {level} out of range")));
        }
        let evaluator = self.evaluator(1.0, horizon)?;
        let mut policy = InterventionPolicy::filled(2, horizon, self.bundle.median_index() as u8);
        for n in 0..horizon {
            policy.set_gene(0, n, level);
        }
        let (projection, bands) = evaluator.project_with_bands(&policy)?;
        let target = self.series.target_index();
        let history = self.series.column(target);
        Ok(Fan {
            levels: self.bundle.levels.clone(),
            history: history[history.len() - HISTORY_SHOWN..].to_vec(),
            bands: bands[target].clone(),
            path: projection.target_path,
            likelihood: projection.likelihood,
        })
    }

    pub fn search(&self, goal: f64, horizon: usize, population: usize, generations: usize, seed: u64) -> Result<SearchSummary> {
        let config = GaConfig {
            population_size: population,
            max_generations: generations,
            seed,
            ..GaConfig::default()
        };
        let goal_spec = GoalSpec::new(goal, config.tolerance_rel, horizon)?;
        let result = run_search(&self.bundle, &self.series, &goal_spec, &config)?;
        let report = &result.best_report;
        Ok(SearchSummary {
            goal,
            converged: result.converged,
            generations: result.generations_run,
            best_fitness: result.trace.rows.iter().map(|r| r.best_fitness).collect(),
            mean_fitness: result.trace.rows.iter().map(|r| r.mean_fitness).collect(),
            driver_levels: report.policy_levels[0].clone(),
            target_path: report.target_path.clone(),
            terminal: report.terminal,
            likelihood_percent: report.likelihood_percent,
        })
    }
}
