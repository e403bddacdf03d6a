//! Walk-forward comparison of point learners on the target variable.

use std::fmt::Write as _;
use std::str::FromStr;
use crate::clock::Stopwatch;

use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::error::{Error, Result};
use crate::lag::{fill_window, make_lag_design_over};
use crate::learners::{fit_quantile, fit_ridge, LinearModel};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::series::MultivariateSeries;
use crate::split::walk_forward_splits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    /// Ridge regression on the bundle's forecaster features.
    Ridge,
    /// Median quantile regression on the same features.
    QuantileMedian,
    /// Last observed value.
    Persistence,
}

impl Learner {
    pub const ALL: [Learner; 3] = [Learner::Ridge, Learner::QuantileMedian, Learner::Persistence];

    pub fn label(self) -> &'static str {
        match self {
            Learner::Ridge => "ridge",
            Learner::QuantileMedian => "quantile_median",
            Learner::Persistence => "persistence",
        }
    }
}

impl FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Learner::ALL
            .into_iter()
            .find(|l| l.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown learner {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub learner: Learner,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTable {
    pub target: String,
    pub rows: Vec<EvaluationRow>,
}

const CSV_HEADER: &str = "learner,n,mae,mse,r2,mape,fit_seconds,predict_seconds";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl EvaluationTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.learner.label(),
                m.n,
                m.mae,
                m.mse,
                opt(m.r2),
                opt(m.mape),
                m.wall_time_fit,
                m.wall_time_predict
            );
        }
        out
    }

    /// Parses [`Self::to_csv`] output. `mape_excluded` is not part of the CSV
    /// and comes back as zero.
    pub fn from_csv(target: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::MalformedHeader(format!("expected {CSV_HEADER:?}")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            let bad = |column: &str, value: &str| Error::BadValue {
                row: i + 1,
                column: column.to_string(),
                value: value.to_string(),
            };
            if cells.len() != 8 {
                return Err(bad("row", line));
            }
            let num = |k: usize, name: &str| -> Result<f64> {
                cells[k].parse().map_err(|_| bad(name, cells[k]))
            };
            let maybe = |k: usize, name: &str| -> Result<Option<f64>> {
                if cells[k].is_empty() {
                    Ok(None)
                } else {
                    num(k, name).map(Some)
                }
            };
            rows.push(EvaluationRow {
                learner: cells[0].parse()?,
                metrics: MetricsReport {
                    n: cells[1].parse().map_err(|_| bad("n", cells[1]))?,
                    mae: num(2, "mae")?,
                    mse: num(3, "mse")?,
                    r2: maybe(4, "r2")?,
                    mape: maybe(5, "mape")?,
                    mape_excluded: 0,
                    wall_time_fit: num(6, "fit_seconds")?,
                    wall_time_predict: num(7, "predict_seconds")?,
                },
            });
        }
        Ok(Self {
            target: target.to_string(),
            rows,
        })
    }

    /// Fixed-width table for terminals.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "target {}\n{:<16} {:>7} {:>12} {:>12} {:>9} {:>9} {:>10} {:>10}\n",
            self.target, "learner", "n", "mae", "mse", "r2", "mape", "fit_s", "predict_s"
        );
        let cell = |x: Option<f64>| x.map_or_else(|| "undef".to_string(), |v| format!("{v:.4}"));
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{:<16} {:>7} {:>12.6} {:>12.6} {:>9} {:>9} {:>10.4} {:>10.4}",
                r.learner.label(),
                m.n,
                m.mae,
                m.mse,
                cell(m.r2),
                cell(m.mape),
                m.wall_time_fit,
                m.wall_time_predict
            );
        }
        out
    }
}

/// Refits each learner on every walk-forward training window of `series`
/// and scores its one-step predictions on the validation blocks.
pub fn evaluate_learners(
    series: &MultivariateSeries,
    bundle: &ModelBundle,
    learners: &[Learner],
) -> Result<EvaluationTable> {
    bundle.check_history(series)?;
    let config = &bundle.config;
    let p = bundle.lag_order;
    let t = series.len();
    let min_train = ((t as f64) * config.min_train_frac).floor() as usize;
    let plan = walk_forward_splits(t, config.n_folds, min_train.max(p + 1))?;
    let target = bundle.target;
    let y = series.column(target);
    let history = series.columns();
    let mut rows = Vec::with_capacity(learners.len());
    for &learner in learners {
        let mut pred = Vec::new();
        let mut actual = Vec::new();
        let (mut fit_s, mut predict_s) = (0.0, 0.0);
        for fold in &plan.folds {
            let start = Stopwatch::start();
            let model: Option<LinearModel> = match learner {
                Learner::Persistence => None,
                Learner::Ridge | Learner::QuantileMedian => {
                    let design = make_lag_design_over(
                        series,
                        target,
                        &bundle.forecaster_features,
                        p,
                        p.max(fold.train.start)..fold.train.end,
                    )?;
                    Some(if learner == Learner::Ridge {
                        fit_ridge(&design, config.ridge_lambda)?
                    } else {
                        fit_quantile(&design, 0.5, config.quantile.epochs, config.quantile.learning_rate)?
                            .base
                    })
                }
            };
            fit_s += start.seconds();
            let start = Stopwatch::start();
            let mut window = Vec::new();
            for i in fold.validation.clone().filter(|&i| i >= p) {
                pred.push(match &model {
                    None => y[i - 1],
                    Some(m) => {
                        fill_window(history, &m.feature_columns, i, &mut window);
                        m.predict(&window)
                    }
                });
                actual.push(y[i]);
            }
            predict_s += start.seconds();
        }
        let mut metrics = compute_metrics(&pred, &actual)?;
        metrics.wall_time_fit = fit_s;
        metrics.wall_time_predict = predict_s;
        rows.push(EvaluationRow { learner, metrics });
    }
    Ok(EvaluationTable {
        target: bundle.names[target].clone(),
        rows,
    })
}
