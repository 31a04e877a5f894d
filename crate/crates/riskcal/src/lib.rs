//! Risk-averse calibration toolkit.
//!
//! Turns any black-box classifier's probability forecasts into prediction
//! sets, max-min actions, and utility certificates with distribution-free
//! coverage guarantees, given a user-declared action x label utility table.
//!
//! # Pipeline
//!
//! 1. [`model`]: utility tables, forecasts, smoothing, datasets.
//! 2. [`menu`]: the per-forecast (coverage, value, action) frontier and the
//!    one-dimensional dual selector over it.
//! 3. [`decision`]: prediction sets, the max-min rule, certificates.
//! 4. [`rac`]: finite-sample calibration of the coverage price, per
//!    hypothesized label, with the exchangeability guarantee.
//! 5. [`oracle`]: exact population solvers and desk-scale brute forces.
//! 6. [`baselines`]: split conformal scores and the best-response policy.
//! 7. [`harness`]: seeded synthetic suites, metrics, Monte Carlo, sweeps.
//! 8. [`io`]: the file formats behind the CLI.
//!
//! The data-parallel loops (batch prediction, Monte Carlo trials,
//! calibration counts) run on rayon under the default `parallel` feature
//! and sequentially without it; both paths produce bit-identical results.

pub mod baselines;
pub mod decision;
mod error;
pub mod harness;
pub mod io;
pub mod menu;
pub mod model;
pub mod oracle;
mod par;
pub mod rac;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

pub use decision::{maxmin, set_at_beta, set_at_coverage, CertifiedDecision, PredictionSet};
pub use menu::{discrete_quantile, CoverageMenu, MenuEntry};
pub use model::{Dataset, Forecast, LabeledSample, UtilityMatrix};
pub use rac::{rac_batch, rac_predict, BetaMode, RacCalibrator, RacConfig, RacPrediction};
