//! Pairwise Granger causality by out-of-sample comparison of restricted and
//! unrestricted autoregressive models.
//!
//! For a pair `(cause, effect)` the restricted model regresses `effect` on its
//! own `p` lags; the unrestricted model adds `p` lags of `cause`. Both are fit
//! on every walk-forward training window and scored by MAE on the following
//! validation block. The per-fold differences `restricted - unrestricted`
//! feed a one-sided paired t-test whose alternative is "the cause's lags
//! reduce the error".

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::lag::make_lag_design_over;
use crate::learners::fit_ridge;
use crate::series::MultivariateSeries;
use crate::split::SplitPlan;

pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub cause: usize,
    pub effect: usize,
    pub fold_errors_restricted: Vec<f64>,
    pub fold_errors_unrestricted: Vec<f64>,
    pub t_stat: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Upper-tail probability `P(T > t)` of Student's t with `df` degrees of
/// freedom, through the regularized incomplete beta function.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    if t > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// One-sided paired t-test of `mean(d) > 0`. Returns `(t, p)`.
///
/// Zero-variance samples are resolved by sign: positive mean gives `p = 0`,
/// negative mean `p = 1` and an all-zero sample `p = 0.5`.
pub fn paired_t_test(differences: &[f64]) -> Result<(f64, f64)> {
    let n = differences.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "t-test needs at least 2 differences, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = differences.iter().sum::<f64>() / nf;
    let var = differences.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    if sd <= 1e-14 * mean.abs() || sd == 0.0 {
        return Ok(if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else if mean < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        });
    }
    let t = mean / (sd / nf.sqrt());
    Ok((t, student_t_sf(t, nf - 1.0).clamp(0.0, 1.0)))
}

fn fold_mae(
    series: &MultivariateSeries,
    effect: usize,
    included: &[usize],
    p: usize,
    train_end: usize,
    validation: std::ops::Range<usize>,
    lambda: f64,
) -> Result<f64> {
    let train = make_lag_design_over(series, effect, included, p, p..train_end)?;
    let model = fit_ridge(&train, lambda)?;
    let val = make_lag_design_over(series, effect, included, p, validation.start.max(p)..validation.end)?;
    let pred = model.predict_design(&val);
    Ok(pred
        .iter()
        .zip(val.targets.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

pub fn granger_pair(
    series: &MultivariateSeries,
    cause: usize,
    effect: usize,
    p: usize,
    plan: &SplitPlan,
    ridge_lambda: f64,
) -> Result<GrangerResult> {
    if cause == effect {
        return Err(Error::InvalidArgument("cause and effect must differ".into()));
    }
    if cause >= series.n_vars() || effect >= series.n_vars() {
        return Err(Error::UnknownVariable(format!("#{cause} or #{effect}")));
    }
    if plan.len() < 2 {
        return Err(Error::InvalidArgument("split plan needs at least 2 folds".into()));
    }
    let mut restricted = Vec::with_capacity(plan.len());
    let mut unrestricted = Vec::with_capacity(plan.len());
    for fold in &plan.folds {
        let r = fold_mae(series, effect, &[effect], p, fold.train.end, fold.validation.clone(), ridge_lambda);
        let u = fold_mae(series, effect, &[effect, cause], p, fold.train.end, fold.validation.clone(), ridge_lambda);
        match (r, u) {
            (Ok(r), Ok(u)) => {
                restricted.push(r);
                unrestricted.push(u);
            }
            (Err(Error::Singular(_)), _) | (_, Err(Error::Singular(_))) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    if restricted.len() < 2 {
        return Err(Error::Singular(format!(
            "only {} of {} folds produced a fit",
            restricted.len(),
            plan.len()
        )));
    }
    let diffs: Vec<f64> = restricted
        .iter()
        .zip(&unrestricted)
        .map(|(r, u)| r - u)
        .collect();
    let (t_stat, p_value) = paired_t_test(&diffs)?;
    Ok(GrangerResult {
        cause,
        effect,
        fold_errors_restricted: restricted,
        fold_errors_unrestricted: unrestricted,
        t_stat,
        p_value,
        significant: p_value < SIGNIFICANCE,
    })
}

/// `p_values[cause][effect]`; the diagonal is undefined (`None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityMatrix {
    pub names: Vec<String>,
    pub p_values: Vec<Vec<Option<f64>>>,
    pub mask: Vec<Vec<bool>>,
}

impl CausalityMatrix {
    pub fn from_p_values(names: Vec<String>, p_values: Vec<Vec<Option<f64>>>) -> Self {
        let mask = p_values
            .iter()
            .map(|row| row.iter().map(|p| p.is_some_and(|p| p < SIGNIFICANCE)).collect())
            .collect();
        Self {
            names,
            p_values,
            mask,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    /// Off-diagonal `(cause, effect)` pairs flagged significant.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let v = self.n_vars();
        (0..v)
            .flat_map(|i| (0..v).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.mask[i][j])
            .collect()
    }
}

pub fn causality_matrix(
    series: &MultivariateSeries,
    p: usize,
    plan: &SplitPlan,
    ridge_lambda: f64,
) -> Result<CausalityMatrix> {
    let v = series.n_vars();
    if v < 2 {
        return Err(Error::InvalidArgument("causality needs at least 2 variables".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..v)
        .flat_map(|i| (0..v).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .collect();
    let run = |&(c, e): &(usize, usize)| granger_pair(series, c, e, p, plan, ridge_lambda);
    #[cfg(feature = "parallel")]
    let results: Vec<GrangerResult> = {
        use rayon::prelude::*;
        pairs.par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<GrangerResult> = pairs.iter().map(run).collect::<Result<_>>()?;

    let mut p_values = vec![vec![None; v]; v];
    for r in &results {
        p_values[r.cause][r.effect] = Some(r.p_value);
    }
    Ok(CausalityMatrix::from_p_values(series.names().to_vec(), p_values))
}

/// `{effect}` followed by every significant cause in matrix order.
pub fn select_features(matrix: &CausalityMatrix, effect: usize) -> Vec<usize> {
    std::iter::once(effect)
        .chain((0..matrix.n_vars()).filter(|&c| c != effect && matrix.mask[c][effect]))
        .collect()
}

/// Companion mask file for a heatmap path: `heat.csv` -> `heat_mask.csv`.
pub fn mask_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("heatmap");
    path.with_file_name(format!("{stem}_mask.csv"))
}

fn grid_csv(names: &[String], cell: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::from("cause\\effect");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (i, n) in names.iter().enumerate() {
        out.push_str(n);
        for j in 0..names.len() {
            out.push(',');
            out.push_str(&cell(i, j));
        }
        out.push('\n');
    }
    out
}

impl CausalityMatrix {
    pub fn p_value_csv(&self) -> String {
        grid_csv(&self.names, |i, j| {
            self.p_values[i][j].map(|p| p.to_string()).unwrap_or_default()
        })
    }

    pub fn mask_csv(&self) -> String {
        grid_csv(&self.names, |i, j| {
            if i == j {
                String::new()
            } else {
                u8::from(self.mask[i][j]).to_string()
            }
        })
    }
}

/// Writes the p-value grid to `path` and the 0/1 mask next to it.
pub fn export_heatmap(matrix: &CausalityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix.p_value_csv()).map_err(|e| Error::io(path, e))?;
    let mpath = mask_path(path);
    fs::write(&mpath, matrix.mask_csv()).map_err(|e| Error::io(&mpath, e))?;
    Ok(())
}

pub fn import_heatmap(path: impl AsRef<Path>) -> Result<CausalityMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut p_values = Vec::with_capacity(names.len());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.get(0) != names.get(i).map(String::as_str) || rec.len() != names.len() + 1 {
            return Err(Error::MalformedHeader(format!("heatmap row {i}")));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|_| Error::BadValue {
                        row: i,
                        column: "p_value".into(),
                        value: cell.to_string(),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        p_values.push(row);
    }
    if p_values.len() != names.len() {
        return Err(Error::MalformedHeader("heatmap is not square".into()));
    }
    Ok(CausalityMatrix::from_p_values(names, p_values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_test_degenerate_cases() {
        assert_eq!(paired_t_test(&[0.0; 4]).unwrap(), (0.0, 0.5));
        assert_eq!(paired_t_test(&[1.0; 4]).unwrap().1, 0.0);
        assert_eq!(paired_t_test(&[-1.0; 4]).unwrap().1, 1.0);
        assert!(paired_t_test(&[1.0]).is_err());
    }

    #[test]
    fn t_test_reference_value() {
        let d = [2.0, 1.5, 2.5, 2.0, 2.0];
        let (t, p) = paired_t_test(&d).unwrap();
        // mean 2, sd sqrt(0.125)
        let expected_t = 2.0 / (0.125f64.sqrt() / 5f64.sqrt());
        assert!((t - expected_t).abs() < 1e-12);
        // t(4) upper tail at 12.649 is about 1.13e-4
        assert!(p < 0.001);
        assert!(p > 1e-5);
    }

    /// Simpson-rule integration of the t density from 0 to |t|.
    fn sf_oracle(t: f64, df: f64) -> f64 {
        let ln_c = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
            - statrs::function::gamma::ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let a = t.abs();
        let n = 20_000;
        let h = a / n as f64;
        let mut s = pdf(0.0) + pdf(a);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(i as f64 * h);
        }
        let half = s * h / 3.0;
        if t >= 0.0 {
            0.5 - half
        } else {
            0.5 + half
        }
    }

    #[test]
    fn t_sf_matches_quadrature() {
        for df in 1..=49 {
            let mut t = -10.0;
            while t <= 10.0 {
                let ours = student_t_sf(t, df as f64);
                let oracle = sf_oracle(t, df as f64);
                assert!((ours - oracle).abs() < 1e-8, "df {df} t {t}: {ours} vs {oracle}");
                t += 0.37;
            }
        }
    }

    #[test]
    fn p_value_decreasing_in_t() {
        let mut last = 1.0;
        for i in -50..=50 {
            let p = student_t_sf(i as f64 * 0.2, 7.0);
            assert!((0.0..=1.0).contains(&p));
            assert!(p <= last);
            last = p;
        }
    }

    fn matrix() -> CausalityMatrix {
        CausalityMatrix::from_p_values(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![None, Some(0.01), Some(0.5)],
                vec![Some(0.2), None, Some(0.3)],
                vec![Some(0.9), Some(0.049), None],
            ],
        )
    }

    #[test]
    fn select_features_order() {
        let m = matrix();
        assert_eq!(select_features(&m, 1), vec![1, 0, 2]);
        assert_eq!(select_features(&m, 0), vec![0]);
        assert_eq!(m.edges(), vec![(0, 1), (2, 1)]);
    }

    #[test]
    fn mask_uses_strict_threshold() {
        let m = CausalityMatrix::from_p_values(
            vec!["a".into(), "b".into()],
            vec![vec![None, Some(0.05)], vec![Some(0.0499), None]],
        );
        assert!(!m.mask[0][1]);
        assert!(m.mask[1][0]);
    }

    #[test]
    fn heatmap_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heat.csv");
        let two = CausalityMatrix::from_p_values(
            vec!["a".into(), "b".into()],
            vec![vec![None, Some(0.125)], vec![Some(1.0 / 3.0), None]],
        );
        export_heatmap(&two, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("a,,"));
        assert_eq!(import_heatmap(&path).unwrap(), two);
        assert!(mask_path(&path).exists());

        let m = matrix();
        export_heatmap(&m, &path).unwrap();
        assert_eq!(import_heatmap(&path).unwrap(), m);
    }
}
