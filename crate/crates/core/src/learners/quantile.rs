use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lag::{make_lag_design, LagDesign};
use crate::learners::LinearModel;
use crate::numfmt;
use crate::series::MultivariateSeries;

/// Default quantile alphabet: 5th to 95th percentile, median included.
pub const DEFAULT_LEVELS: [f64; 11] = [
    0.05, 0.15, 0.25, 0.35, 0.45, 0.50, 0.55, 0.65, 0.75, 0.85, 0.95,
];

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("quantile level {tau} outside (0, 1)")))
    }
}

/// Pinball (quantile) loss of predicting `pred` when `actual` is observed.
pub fn pinball_loss(tau: f64, actual: f64, pred: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(pinball_unchecked(tau, actual - pred))
}

#[inline]
fn pinball_unchecked(tau: f64, residual: f64) -> f64 {
    (tau * residual).max((tau - 1.0) * residual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileOptions {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for QuantileOptions {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModel {
    #[serde(with = "numfmt::scalar")]
    pub tau: f64,
    pub base: LinearModel,
    pub training_epochs: usize,
    #[serde(with = "numfmt::scalar")]
    pub learning_rate: f64,
    #[serde(with = "numfmt::scalar")]
    pub initial_loss: f64,
    #[serde(with = "numfmt::scalar")]
    pub final_loss: f64,
}

/// Per-column standardization; constant columns keep a unit scale.
fn standardize(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

/// Decorrelates z-scored rows in place (`x_w = L⁻¹ x_z` with `LLᵀ` the
/// feature covariance). Returns the Cholesky factor, or `None` when the
/// covariance is singular and rows are left untouched.
fn whiten_rows(x: &mut [f64], m: usize, k: usize) -> Option<Cholesky<f64, Dyn>> {
    if k < 2 {
        return None;
    }
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for row in x.chunks_exact(k) {
        for a in 0..k {
            for b in 0..=a {
                cov[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..=a {
            let c = cov[(a, b)] / m as f64;
            cov[(a, b)] = c;
            cov[(b, a)] = c;
        }
    }
    let chol = cov.cholesky()?;
    let l = chol.l();
    if (0..k).any(|d| l[(d, d)] < 1e-8) {
        return None;
    }
    let mut buf = DVector::<f64>::zeros(k);
    for row in x.chunks_exact_mut(k) {
        buf.copy_from_slice(row);
        if !l.solve_lower_triangular_mut(&mut buf) {
            return None;
        }
        row.copy_from_slice(buf.as_slice());
    }
    Some(chol)
}

/// Maps weights on whitened features back to z-scored features: `w_z = L⁻ᵀ v`.
fn unwhiten_weights(chol: &Cholesky<f64, Dyn>, w: &mut [f64]) {
    let mut v = DVector::from_column_slice(w);
    chol.l().tr_solve_lower_triangular_mut(&mut v);
    w.copy_from_slice(v.as_slice());
}

/// Linear quantile regression by full-batch subgradient descent on the mean
/// pinball loss. Features and targets are z-normalized and the features
/// decorrelated, parameters start at zero, and epoch `e` (1-based) uses step `lr / sqrt(e)`. The iterate with
/// the lowest training loss is returned, so the final loss never exceeds the
/// initial one.
pub fn fit_quantile(
    design: &LagDesign,
    tau: f64,
    epochs: usize,
    lr: f64,
) -> Result<QuantileModel> {
    check_tau(tau)?;
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!("learning rate {lr}")));
    }
    let m = design.n_rows();
    let k = design.n_features();
    if m < 20 {
        return Err(Error::InsufficientData(format!(
            "quantile fit needs at least 20 rows, got {m}"
        )));
    }
    let (y_mean, y_sd) = standardize(design.targets.iter().copied(), m);
    let col_stats: Vec<(f64, f64)> = (0..k)
        .map(|c| standardize(design.rows.column(c).iter().copied(), m))
        .collect();
    // Row-major z-scored copy for cache-friendly passes.
    let mut x = vec![0.0; m * k];
    for i in 0..m {
        for (c, (mu, sd)) in col_stats.iter().enumerate() {
            x[i * k + c] = (design.rows[(i, c)] - mu) / sd;
        }
    }
    let y: Vec<f64> = design.targets.iter().map(|v| (v - y_mean) / y_sd).collect();
    let whitener = whiten_rows(&mut x, m, k);

    let mut b = 0.0;
    let mut w = vec![0.0; k];
    let mut grad = vec![0.0; k];
    let mut best = (f64::INFINITY, 0.0, w.clone());
    let mut initial = f64::NAN;
    let inv_m = 1.0 / m as f64;

    for epoch in 0..=epochs {
        let mut loss = 0.0;
        let mut gb = 0.0;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..m {
            let row = &x[i * k..(i + 1) * k];
            let pred = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let r = y[i] - pred;
            loss += pinball_unchecked(tau, r);
            // d loss / d pred
            let g = if r > 0.0 {
                -tau
            } else if r < 0.0 {
                1.0 - tau
            } else {
                0.0
            };
            if g != 0.0 {
                gb += g;
                for (gc, xc) in grad.iter_mut().zip(row) {
                    *gc += g * xc;
                }
            }
        }
        loss *= inv_m;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if epoch == 0 {
            initial = loss;
        }
        if loss < best.0 {
            best = (loss, b, w.clone());
        }
        if epoch == epochs {
            break;
        }
        let step = lr / ((epoch + 1) as f64).sqrt();
        b -= step * gb * inv_m;
        for (wc, gc) in w.iter_mut().zip(&grad) {
            *wc -= step * gc * inv_m;
        }
    }

    let (final_loss, b, mut w) = best;
    if let Some(chol) = &whitener {
        unwhiten_weights(chol, &mut w);
    }
    let weights: Vec<f64> = w
        .iter()
        .zip(&col_stats)
        .map(|(wz, (_, sd))| y_sd * wz / sd)
        .collect();
    let intercept = y_mean + y_sd * b
        - weights
            .iter()
            .zip(&col_stats)
            .map(|(wr, (mu, _))| wr * mu)
            .sum::<f64>();
    Ok(QuantileModel {
        tau,
        base: LinearModel {
            weights,
            intercept,
            feature_columns: design.feature_columns.clone(),
            ridge_lambda: 0.0,
        },
        training_epochs: epochs,
        learning_rate: lr,
        initial_loss: initial * y_sd,
        final_loss: final_loss * y_sd,
    })
}

/// One-step-ahead quantile regressors for a single variable, one per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBank {
    pub variable: usize,
    #[serde(with = "numfmt::vec")]
    pub levels: Vec<f64>,
    pub models: Vec<QuantileModel>,
    /// Variables whose lags feed the models, the response itself first.
    pub features: Vec<usize>,
    pub lag_order: usize,
}

pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("empty quantile alphabet".into()));
    }
    for &l in levels {
        check_tau(l)?;
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "quantile levels must be strictly ascending".into(),
        ));
    }
    if !levels.iter().any(|&l| l == 0.5) {
        return Err(Error::InvalidArgument(
            "quantile alphabet must contain 0.5".into(),
        ));
    }
    Ok(())
}

impl QuantileBank {
    pub fn median_index(&self) -> usize {
        self.levels
            .iter()
            .position(|&l| l == 0.5)
            .expect("validated alphabet contains the median")
    }

    pub fn n_features(&self) -> usize {
        self.models.first().map_or(0, |m| m.base.n_features())
    }

    /// Writes sorted per-level predictions for `window` into `out`.
    pub fn predict_into(&self, window: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if window.len() != self.n_features() {
            return Err(Error::InvalidArgument(format!(
                "lag window has {} values, bank expects {}",
                window.len(),
                self.n_features()
            )));
        }
        out.clear();
        out.extend(self.models.iter().map(|m| m.base.predict(window)));
        out.sort_by(f64::total_cmp);
        Ok(())
    }
}

/// Quantile predictions for a lag window laid out like the bank's feature
/// columns, returned in ascending order (monotone rearrangement).
pub fn predict_quantiles(bank: &QuantileBank, window: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(bank.levels.len());
    bank.predict_into(window, &mut out)?;
    Ok(out)
}

pub fn fit_bank(
    series: &MultivariateSeries,
    variable: usize,
    features: &[usize],
    levels: &[f64],
    p: usize,
    opts: QuantileOptions,
) -> Result<QuantileBank> {
    validate_levels(levels)?;
    if variable >= series.n_vars() {
        return Err(Error::UnknownVariable(format!("#{variable}")));
    }
    if !features.contains(&variable) {
        return Err(Error::InvalidArgument(format!(
            "feature set for {} must include its own lags",
            series.names()[variable]
        )));
    }
    let design = make_lag_design(series, variable, features, p)?;
    let fit = |&tau: &f64| fit_quantile(&design, tau, opts.epochs, opts.learning_rate);
    #[cfg(feature = "parallel")]
    let models = {
        use rayon::prelude::*;
        levels.par_iter().map(fit).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let models = levels.iter().map(fit).collect::<Result<Vec<_>>>()?;
    Ok(QuantileBank {
        variable,
        levels: levels.to_vec(),
        models,
        features: features.to_vec(),
        lag_order: p,
    })
}
