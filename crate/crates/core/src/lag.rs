//! Lagged design matrices.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultivariateSeries;

/// Identifies one design column: `variable` observed `lag` steps back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub variable: usize,
    pub lag: usize,
}

/// Column layout for a set of included variables at lag order `p`:
/// variables in the given order, lags `1..=p` within each.
pub fn feature_layout(included: &[usize], p: usize) -> Vec<FeatureColumn> {
    included
        .iter()
        .flat_map(|&variable| (1..=p).map(move |lag| FeatureColumn { variable, lag }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagDesign {
    pub rows: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub lag_order: usize,
    pub feature_columns: Vec<FeatureColumn>,
}

impl LagDesign {
    /// Wraps an arbitrary design, e.g. an intercept-only one with zero columns.
    pub fn from_parts(
        rows: DMatrix<f64>,
        targets: DVector<f64>,
        lag_order: usize,
        feature_columns: Vec<FeatureColumn>,
    ) -> Result<Self> {
        if rows.nrows() != targets.len() {
            return Err(Error::LengthMismatch {
                left: rows.nrows(),
                right: targets.len(),
            });
        }
        if rows.ncols() != feature_columns.len() {
            return Err(Error::LengthMismatch {
                left: rows.ncols(),
                right: feature_columns.len(),
            });
        }
        Ok(Self {
            rows,
            targets,
            lag_order,
            feature_columns,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }
}

/// Lag design whose targets are every time index `t ∈ [p, T)`.
pub fn make_lag_design(
    series: &MultivariateSeries,
    response: usize,
    included: &[usize],
    p: usize,
) -> Result<LagDesign> {
    if p >= series.len() {
        return Err(Error::InsufficientData(format!(
            "lag order {p} needs more than {} rows",
            series.len()
        )));
    }
    make_lag_design_over(series, response, included, p, p..series.len())
}

/// Lag design restricted to target times in `targets`. Lags may reach back
/// before `targets.start` but never before row 0.
pub fn make_lag_design_over(
    series: &MultivariateSeries,
    response: usize,
    included: &[usize],
    p: usize,
    targets: Range<usize>,
) -> Result<LagDesign> {
    if p == 0 {
        return Err(Error::InvalidArgument("lag order must be at least 1".into()));
    }
    if included.is_empty() {
        return Err(Error::InvalidArgument("no included variables".into()));
    }
    for &v in included.iter().chain(std::iter::once(&response)) {
        if v >= series.n_vars() {
            return Err(Error::UnknownVariable(format!("#{v}")));
        }
    }
    if targets.start < p || targets.end > series.len() || targets.start >= targets.end {
        return Err(Error::InsufficientData(format!(
            "target rows {targets:?} invalid for lag order {p} and {} rows",
            series.len()
        )));
    }
    let feature_columns = feature_layout(included, p);
    let m = targets.len();
    let k = feature_columns.len();
    let rows = DMatrix::from_fn(m, k, |i, c| {
        let col = feature_columns[c];
        series.value(targets.start + i - col.lag, col.variable)
    });
    let resp = series.column(response);
    let y = DVector::from_iterator(m, targets.map(|t| resp[t]));
    Ok(LagDesign {
        rows,
        targets: y,
        lag_order: p,
        feature_columns,
    })
}

/// Fills `out` with the feature row for predicting time `t` from `history`,
/// where `history[v][t - lag]` is variable `v` at lag `lag`.
pub(crate) fn fill_window(history: &[Vec<f64>], columns: &[FeatureColumn], t: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend(columns.iter().map(|c| history[c.variable][t - c.lag]));
}
