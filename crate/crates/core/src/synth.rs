//! Stable VAR(p) generator with planted causal structure.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultivariateSeries;

/// 2024-01-01T00:00:00Z.
pub const SYNTH_EPOCH_NS: i64 = 1_704_067_200_000_000_000;
pub const SYNTH_DELTA_NS: i64 = 3_000_000_000;

/// `x_t = mean + Σ_k A_k (x_{t-k} - mean) + σ ⊙ ε_t` with standard normal `ε_t`.
///
/// `coefficients[k][i][j]` is the weight of variable `j` at lag `k + 1` in the
/// equation for variable `i`, so a nonzero entry plants the edge `j → i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSystemSpec {
    pub name: String,
    pub names: Vec<String>,
    pub coefficients: Vec<Vec<Vec<f64>>>,
    pub mean: Vec<f64>,
    pub noise_sigma: Vec<f64>,
    pub burn_in: usize,
    pub target: usize,
    pub actionable: Vec<bool>,
}

impl VarSystemSpec {
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// `adjacency[cause][effect]`, diagonal excluded.
    pub fn planted_adjacency(&self) -> Vec<Vec<bool>> {
        let v = self.n_vars();
        let mut adj = vec![vec![false; v]; v];
        for a in &self.coefficients {
            for (effect, row) in a.iter().enumerate() {
                for (cause, w) in row.iter().enumerate() {
                    if cause != effect && w.abs() > 0.0 {
                        adj[cause][effect] = true;
                    }
                }
            }
        }
        adj
    }

    pub fn planted_edges(&self) -> Vec<(usize, usize)> {
        let adj = self.planted_adjacency();
        let v = self.n_vars();
        (0..v)
            .flat_map(|i| (0..v).map(move |j| (i, j)))
            .filter(|&(i, j)| adj[i][j])
            .collect()
    }

    /// Spectral radius of the companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        let v = self.n_vars();
        let p = self.order();
        if p == 0 {
            return 0.0;
        }
        let mut comp = DMatrix::<f64>::zeros(v * p, v * p);
        for (k, a) in self.coefficients.iter().enumerate() {
            for i in 0..v {
                for j in 0..v {
                    comp[(i, k * v + j)] = a[i][j];
                }
            }
        }
        for i in v..v * p {
            comp[(i, i - v)] = 1.0;
        }
        comp.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.n_vars();
        if v == 0 {
            return Err(Error::InvalidArgument("VAR spec has no variables".into()));
        }
        let shapes_ok = self.mean.len() == v
            && self.noise_sigma.len() == v
            && self.actionable.len() == v
            && self.target < v
            && self
                .coefficients
                .iter()
                .all(|a| a.len() == v && a.iter().all(|row| row.len() == v));
        if !shapes_ok {
            return Err(Error::InvalidArgument(format!(
                "VAR spec {:?} has inconsistent dimensions",
                self.name
            )));
        }
        if self.noise_sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("noise sigma must be positive".into()));
        }
        let radius = self.spectral_radius();
        if radius >= 1.0 {
            return Err(Error::Unstable { radius });
        }
        Ok(())
    }
}

pub fn generate_var(spec: &VarSystemSpec, t: usize, seed: u64) -> Result<MultivariateSeries> {
    spec.validate()?;
    if t < 100 {
        return Err(Error::InsufficientData(format!("synthetic length {t} < 100")));
    }
    let v = spec.n_vars();
    let p = spec.order();
    let total = t + spec.burn_in;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // deviations from the mean, time-major
    let mut dev = vec![vec![0.0; v]; total + p];
    for step in p..total + p {
        for i in 0..v {
            let mut x = 0.0;
            for (k, a) in spec.coefficients.iter().enumerate() {
                let past = &dev[step - k - 1];
                x += a[i].iter().zip(past).map(|(w, y)| w * y).sum::<f64>();
            }
            let eps: f64 = StandardNormal.sample(&mut rng);
            dev[step][i] = x + spec.noise_sigma[i] * eps;
        }
    }
    let start = p + spec.burn_in;
    let columns = (0..v)
        .map(|i| dev[start..].iter().map(|row| spec.mean[i] + row[i]).collect())
        .collect();
    MultivariateSeries::regular(
        spec.names.clone(),
        SYNTH_EPOCH_NS,
        SYNTH_DELTA_NS,
        columns,
        spec.target,
        spec.actionable.clone(),
    )
}

fn names(v: usize) -> Vec<String> {
    (1..=v).map(|i| format!("x{i}")).collect()
}

/// Four variables with edges x1→x2 (0.8), x1→x3 (0.6), x3→x4 (0.7) and
/// self-lags 0.3.
pub fn granger4() -> VarSystemSpec {
    let mut a = vec![vec![0.0; 4]; 4];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 0.3;
    }
    a[1][0] = 0.8;
    a[2][0] = 0.6;
    a[3][2] = 0.7;
    VarSystemSpec {
        name: "granger4".into(),
        names: names(4),
        coefficients: vec![a],
        mean: vec![0.0; 4],
        noise_sigma: vec![1.0; 4],
        burn_in: 200,
        target: 3,
        actionable: vec![true, true, true, false],
    }
}

/// Horizon of the planted ga5 search problem.
pub const GA5_HORIZON: usize = 10;
/// Quantile level of every actionable gene in the planted ga5 policy.
pub const GA5_PLANTED_TAU: f64 = 0.95;
/// Series length used to train the ga5 search bundle.
pub const GA5_LENGTH: usize = 2000;

/// Five-variable causal chain x1→x2→x3→x4→x5 around level 3; the target x5
/// is not actionable.
pub fn ga5() -> VarSystemSpec {
    let mut a = vec![vec![0.0; 5]; 5];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 0.5;
        if i > 0 {
            row[i - 1] = 0.4;
        }
    }
    VarSystemSpec {
        name: "ga5".into(),
        names: names(5),
        coefficients: vec![a],
        mean: vec![3.0; 5],
        noise_sigma: vec![1.0; 5],
        burn_in: 200,
        target: 4,
        actionable: vec![true, true, true, true, false],
    }
}

/// Two independent white-noise channels.
pub fn null2() -> VarSystemSpec {
    VarSystemSpec {
        name: "null2".into(),
        names: names(2),
        coefficients: vec![vec![vec![0.0; 2]; 2]],
        mean: vec![0.0; 2],
        noise_sigma: vec![1.0; 2],
        burn_in: 200,
        target: 1,
        actionable: vec![true, false],
    }
}

/// Single AR(1) channel with coefficient 0.9 and unit noise.
pub fn ar1() -> VarSystemSpec {
    VarSystemSpec {
        name: "ar1".into(),
        names: names(1),
        coefficients: vec![vec![vec![0.9]]],
        mean: vec![0.0],
        noise_sigma: vec![1.0],
        burn_in: 200,
        target: 0,
        actionable: vec![true],
    }
}

pub fn standard_benchmarks() -> Vec<VarSystemSpec> {
    vec![granger4(), ga5(), null2(), ar1()]
}

pub fn benchmark(name: &str) -> Result<VarSystemSpec> {
    standard_benchmarks()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown benchmark {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{read_csv, IngestOptions};

    #[test]
    fn white_noise_mean() {
        let mut spec = null2();
        spec.coefficients = vec![vec![vec![0.0; 2]; 2]];
        let t = 4000;
        let s = generate_var(&spec, t, 1).unwrap();
        for v in 0..2 {
            let mean = s.column(v).iter().sum::<f64>() / t as f64;
            assert!(mean.abs() < 4.0 / (t as f64).sqrt());
        }
    }

    #[test]
    fn ar1_autocorrelation() {
        let t = 5000;
        let s = generate_var(&ar1(), t, 2).unwrap();
        let x = s.column(0);
        let mean = x.iter().sum::<f64>() / t as f64;
        let num: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let den: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        assert!((num / den - 0.9).abs() < 0.05, "{}", num / den);
        assert_eq!(s.delta_seconds(), 3.0);
    }

    #[test]
    fn unstable_rejected() {
        let mut spec = ar1();
        spec.coefficients = vec![vec![vec![1.2]]];
        match generate_var(&spec, 200, 0) {
            Err(Error::Unstable { radius }) => assert!((radius - 1.2).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn benchmarks_well_formed() {
        for spec in standard_benchmarks() {
            spec.validate().unwrap();
        }
        assert_eq!(granger4().planted_edges(), vec![(0, 1), (0, 2), (2, 3)]);
        assert!(null2().planted_edges().is_empty());
        assert_eq!(ga5().planted_edges().len(), 4);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_var(&granger4(), 300, 5).unwrap();
        let b = generate_var(&granger4(), 300, 5).unwrap();
        let c = generate_var(&granger4(), 300, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let s = generate_var(&granger4(), 150, 8).unwrap();
        let (back, _) = read_csv(
            s.to_csv_string().as_bytes(),
            &IngestOptions {
                actionable: Some(vec!["x1".into(), "x2".into(), "x3".into()]),
                ..IngestOptions::new("x4")
            },
        )
        .unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn null2_cross_covariance() {
        let t = 5000;
        let s = generate_var(&null2(), t, 3).unwrap();
        let (a, b) = (s.column(0), s.column(1));
        let ma = a.iter().sum::<f64>() / t as f64;
        let mb = b.iter().sum::<f64>() / t as f64;
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / t as f64;
        assert!(cov.abs() < 4.0 / (t as f64).sqrt());
    }
}
