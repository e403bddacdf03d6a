//! Counterfactual scenario search for multivariate time-series forecasts.
//!
//! Given a fitted [`bundle::ModelBundle`], a history window and a goal for the
//! target variable, [`ga::run_search`] looks for a grid of quantile choices
//! (one per variable and future step) whose recursive projection lands the
//! target near the goal while staying close to the present and plausible.

mod clock;
pub mod error;
pub mod lag;
pub mod learners;
pub mod metrics;
pub mod numfmt;
pub mod series;
pub mod split;
pub mod synth;
pub mod causality;
pub mod bundle;
pub mod scenario;
pub mod ga;
pub mod evaluate;

pub use error::{Error, Result};
