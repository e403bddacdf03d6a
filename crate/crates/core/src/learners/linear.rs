use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lag::{FeatureColumn, LagDesign};
use crate::numfmt;

/// `y ≈ intercept + weights · x` over a fixed feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    #[serde(with = "numfmt::vec")]
    pub weights: Vec<f64>,
    #[serde(with = "numfmt::scalar")]
    pub intercept: f64,
    pub feature_columns: Vec<FeatureColumn>,
    #[serde(with = "numfmt::scalar")]
    pub ridge_lambda: f64,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_design(&self, design: &LagDesign) -> Vec<f64> {
        let mut row = Vec::with_capacity(design.n_features());
        (0..design.n_rows())
            .map(|i| {
                row.clear();
                row.extend(design.rows.row(i).iter().copied());
                self.predict(&row)
            })
            .collect()
    }
}

/// Closed-form ridge regression with an unpenalized intercept (columns and
/// targets are centered before solving `(XᵀX + λI) w = Xᵀy`).
pub fn fit_ridge(design: &LagDesign, lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge lambda {lambda}")));
    }
    let m = design.n_rows();
    let k = design.n_features();
    if m <= k {
        return Err(Error::InsufficientData(format!("{m} rows for {k} features")));
    }
    let x = &design.rows;
    let y = &design.targets;
    let y_mean = y.mean();
    if k == 0 {
        return Ok(LinearModel {
            weights: Vec::new(),
            intercept: y_mean,
            feature_columns: design.feature_columns.clone(),
            ridge_lambda: lambda,
        });
    }
    let x_mean: Vec<f64> = (0..k).map(|c| x.column(c).mean()).collect();
    let xc = DMatrix::from_fn(m, k, |i, c| x[(i, c)] - x_mean[c]);
    let yc = DVector::from_iterator(m, y.iter().map(|v| v - y_mean));
    let mut gram = xc.tr_mul(&xc);
    for d in 0..k {
        gram[(d, d)] += lambda;
    }
    let rhs = xc.tr_mul(&yc);
    let w = gram
        .cholesky()
        .ok_or_else(|| {
            Error::Singular(format!(
                "normal equations not positive definite at lambda={lambda}"
            ))
        })?
        .solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("non-finite weights at lambda={lambda}")));
    }
    let intercept = y_mean - w.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
    Ok(LinearModel {
        weights: w.iter().copied().collect(),
        intercept,
        feature_columns: design.feature_columns.clone(),
        ridge_lambda: lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(rows: DMatrix<f64>, y: Vec<f64>) -> LagDesign {
        let k = rows.ncols();
        let cols = (0..k).map(|v| FeatureColumn { variable: v, lag: 1 }).collect();
        LagDesign::from_parts(rows, DVector::from_vec(y), 1, cols).unwrap()
    }

    #[test]
    fn exact_linear_data() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let m = fit_ridge(&design(DMatrix::from_vec(10, 1, xs), ys), 0.0).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-9);
        assert!(m.intercept.abs() < 1e-9);
    }

    #[test]
    fn huge_lambda_shrinks_to_mean() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        let mean = ys.iter().sum::<f64>() / 10.0;
        let m = fit_ridge(&design(DMatrix::from_vec(10, 1, xs), ys), 1e12).unwrap();
        assert!(m.weights[0].abs() < 1e-8);
        assert!((m.intercept - mean).abs() < 1e-6);
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = design(x.clone(), y.clone());
        let m = fit_ridge(&d, 0.0).unwrap();
        let pred = m.predict_design(&d);
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        assert!(resid.iter().sum::<f64>().abs() < 1e-7);
        for c in 0..3 {
            let dot: f64 = (0..50).map(|i| x[(i, c)] * resid[i]).sum();
            assert!(dot.abs() < 1e-7, "column {c}: {dot}");
        }
    }

    #[test]
    fn singular_and_short_designs() {
        let x = DMatrix::from_fn(10, 2, |i, _| i as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(fit_ridge(&design(x.clone(), y.clone()), 0.0), Err(Error::Singular(_))));
        assert!(fit_ridge(&design(x, y), 1e-3).is_ok());
        let short = DMatrix::from_fn(2, 2, |i, j| (i + j) as f64);
        assert!(fit_ridge(&design(short, vec![1.0, 2.0]), 1.0).is_err());
    }

    #[test]
    fn deterministic_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(40, 4, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let d = design(x, y);
        let a = fit_ridge(&d, 0.1).unwrap();
        let b = fit_ridge(&d, 0.1).unwrap();
        assert_eq!(
            a.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
            b.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>()
        );
    }
}
