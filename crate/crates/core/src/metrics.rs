use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point-forecast quality summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    /// `None` when the actuals are constant.
    pub r2: Option<f64>,
    /// `None` when every actual is (numerically) zero.
    pub mape: Option<f64>,
    /// Samples excluded from MAPE because `|actual| < 1e-9`.
    pub mape_excluded: usize,
    pub n: usize,
    pub wall_time_fit: f64,
    pub wall_time_predict: f64,
}

const MAPE_GUARD: f64 = 1e-9;

pub fn compute_metrics(pred: &[f64], actual: &[f64]) -> Result<MetricsReport> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: actual.len(),
        });
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} samples")));
    }
    let nf = n as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut excluded = 0;
    for (p, a) in pred.iter().zip(actual) {
        let e = a - p;
        abs += e.abs();
        sq += e * e;
        if a.abs() < MAPE_GUARD {
            excluded += 1;
        } else {
            pct += (e / a).abs();
        }
    }
    let mean = actual.iter().sum::<f64>() / nf;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    let r2 = (ss_tot > 0.0).then(|| 1.0 - sq / ss_tot);
    let kept = n - excluded;
    Ok(MetricsReport {
        mae: abs / nf,
        mse: sq / nf,
        r2,
        mape: (kept > 0).then(|| pct / kept as f64),
        mape_excluded: excluded,
        n,
        wall_time_fit: 0.0,
        wall_time_predict: 0.0,
    })
}
