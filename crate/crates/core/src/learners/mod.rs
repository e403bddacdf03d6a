//! Linear point forecasters and pinball-loss quantile regressors.

mod linear;
mod quantile;

pub use linear::{fit_ridge, LinearModel};
pub use quantile::{
    fit_bank, fit_quantile, pinball_loss, predict_quantiles, QuantileBank, QuantileModel,
    QuantileOptions, validate_levels, DEFAULT_LEVELS,
};
