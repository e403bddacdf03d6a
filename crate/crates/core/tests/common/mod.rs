#![allow(dead_code)]

use cfsearch_core::bundle::{train_bundle, ModelBundle, TrainConfig};
use cfsearch_core::series::MultivariateSeries;
use cfsearch_core::synth::{ar1, generate_var, VarSystemSpec};

/// AR(1) with coefficient 0.9 around `mean`.
pub fn shifted_ar1(mean: f64) -> VarSystemSpec {
    let mut spec = ar1();
    spec.mean = vec![mean];
    spec
}

pub fn trained(spec: &VarSystemSpec, t: usize, seed: u64, config: &TrainConfig) -> (ModelBundle, MultivariateSeries) {
    let series = generate_var(spec, t, seed).unwrap();
    let bundle = train_bundle(&series, config).unwrap();
    (bundle, series)
}
