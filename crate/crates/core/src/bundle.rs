//! Trained model bundle: causality matrix, per-variable quantile banks and
//! the main one-step target forecaster.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::causality::{causality_matrix, select_features, CausalityMatrix};
use crate::error::{Error, Result};
use crate::lag::{make_lag_design, make_lag_design_over};
use crate::learners::{fit_bank, fit_ridge, LinearModel, QuantileBank, QuantileOptions, DEFAULT_LEVELS};
use crate::numfmt;
use crate::series::MultivariateSeries;
use crate::split::walk_forward_splits;

pub const DEFAULT_LAG_ORDER: usize = 5;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lag_order: usize,
    pub levels: Vec<f64>,
    pub ridge_lambda: f64,
    pub quantile: QuantileOptions,
    pub n_folds: usize,
    /// Fraction of rows reserved for the first causality training window.
    pub min_train_frac: f64,
    /// When set, also trains a direct forecaster `h` steps ahead whose output
    /// replaces the recursive terminal value.
    #[serde(default)]
    pub direct_horizon: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lag_order: DEFAULT_LAG_ORDER,
            levels: DEFAULT_LEVELS.to_vec(),
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            quantile: QuantileOptions::default(),
            n_folds: DEFAULT_FOLDS,
            min_train_frac: 0.5,
            direct_horizon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    #[serde(with = "numfmt::scalar")]
    pub mean: f64,
    #[serde(with = "numfmt::scalar")]
    pub std: f64,
}

impl Normalization {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// Ridge model predicting the target `horizon` steps after the end of its
/// lag window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectForecaster {
    pub horizon: usize,
    pub model: LinearModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub names: Vec<String>,
    pub target: usize,
    pub actionable: Vec<bool>,
    pub delta_seconds: f64,
    pub lag_order: usize,
    #[serde(with = "numfmt::vec")]
    pub levels: Vec<f64>,
    /// `banks[v]` forecasts variable `v`.
    pub banks: Vec<QuantileBank>,
    pub forecaster: LinearModel,
    pub forecaster_features: Vec<usize>,
    pub normalization: Vec<Normalization>,
    pub causality: CausalityMatrix,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct: Option<DirectForecaster>,
}

impl ModelBundle {
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn median_index(&self) -> usize {
        self.levels
            .iter()
            .position(|&l| l == 0.5)
            .expect("bundle alphabet contains the median")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: Self = serde_json::from_str(text)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.n_vars();
        crate::learners::validate_levels(&self.levels)?;
        if self.banks.len() != v
            || self.normalization.len() != v
            || self.actionable.len() != v
            || self.target >= v
        {
            return Err(Error::InvalidArgument("bundle dimensions disagree".into()));
        }
        for (i, bank) in self.banks.iter().enumerate() {
            if bank.variable != i || bank.levels != self.levels || bank.models.len() != self.levels.len() {
                return Err(Error::InvalidArgument(format!("bank {i} is inconsistent")));
            }
            if bank.features.iter().any(|&f| f >= v) {
                return Err(Error::InvalidArgument(format!("bank {i} references unknown feature")));
            }
        }
        let bad_columns = |m: &LinearModel| {
            m.feature_columns
                .iter()
                .any(|c| c.variable >= v || c.lag == 0 || c.lag > self.lag_order)
        };
        if bad_columns(&self.forecaster) {
            return Err(Error::InvalidArgument("forecaster references unknown feature".into()));
        }
        if let Some(d) = &self.direct {
            if d.horizon == 0 || bad_columns(&d.model) {
                return Err(Error::InvalidArgument("direct forecaster is inconsistent".into()));
            }
        }
        Ok(())
    }

    /// Checks that `history` carries the same variables in the same order.
    pub fn check_history(&self, history: &MultivariateSeries) -> Result<()> {
        if history.names() != self.names.as_slice() {
            return Err(Error::InvalidArgument(
                "history variables do not match the bundle".into(),
            ));
        }
        if history.len() < self.lag_order {
            return Err(Error::InsufficientData(format!(
                "history has {} rows, lag order is {}",
                history.len(),
                self.lag_order
            )));
        }
        Ok(())
    }
}

/// Runs the causality analysis, then fits every variable's quantile bank and
/// the target's point forecaster on Granger-selected features.
pub fn train_bundle(series: &MultivariateSeries, config: &TrainConfig) -> Result<ModelBundle> {
    crate::learners::validate_levels(&config.levels)?;
    let t = series.len();
    let p = config.lag_order;
    let min_train = ((t as f64) * config.min_train_frac).floor() as usize;
    if min_train <= p + 1 {
        return Err(Error::InsufficientData(format!(
            "{t} rows leave too little training data for lag order {p}"
        )));
    }
    let plan = walk_forward_splits(t, config.n_folds, min_train)?;
    let causality = if series.n_vars() >= 2 {
        causality_matrix(series, p, &plan, config.ridge_lambda)?
    } else {
        CausalityMatrix::from_p_values(series.names().to_vec(), vec![vec![None]])
    };
    let banks = (0..series.n_vars())
        .map(|v| {
            let features = select_features(&causality, v);
            fit_bank(series, v, &features, &config.levels, p, config.quantile)
        })
        .collect::<Result<Vec<_>>>()?;
    let target = series.target_index();
    let forecaster_features = select_features(&causality, target);
    let design = make_lag_design(series, target, &forecaster_features, p)?;
    let forecaster = fit_ridge(&design, config.ridge_lambda)?;
    let direct = match config.direct_horizon {
        None => None,
        Some(h) => Some(DirectForecaster {
            horizon: h,
            model: fit_direct(series, &forecaster_features, p, h, config.ridge_lambda)?,
        }),
    };
    let normalization = series
        .column_stats()
        .into_iter()
        .map(|(mean, std)| Normalization {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        })
        .collect();
    Ok(ModelBundle {
        names: series.names().to_vec(),
        target,
        actionable: series.actionable_mask().to_vec(),
        delta_seconds: series.delta_seconds(),
        lag_order: p,
        levels: config.levels.clone(),
        banks,
        forecaster,
        forecaster_features,
        normalization,
        causality,
        config: config.clone(),
        direct,
    })
}

fn fit_direct(
    series: &MultivariateSeries,
    features: &[usize],
    p: usize,
    h: usize,
    lambda: f64,
) -> Result<LinearModel> {
    let t = series.len();
    if h == 0 || p + h > t {
        return Err(Error::InvalidArgument(format!(
            "direct horizon {h} does not fit {t} rows with lag order {p}"
        )));
    }
    let target = series.target_index();
    let mut design = make_lag_design_over(series, target, features, p, p..t + 1 - h)?;
    let y = series.column(target);
    for (i, v) in design.targets.iter_mut().enumerate() {
        *v = y[p + i + h - 1];
    }
    fit_ridge(&design, lambda)
}
