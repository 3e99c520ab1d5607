//! Multilevel matrix factor model for grouped matrix-variate time series.
//!
//! Each group `m` observes `X_mt = R_m G_t C_mᵀ + Gamma_m F_mt Lambda_mᵀ + E_mt`:
//! a global matrix factor `G_t` shared by all groups, a local factor `F_mt`
//! specific to the group, and noise. Estimation runs in three stages:
//!
//! 1. [`global`]: loading spaces of `R_m` and `C_m` from cross-group
//!    covariance statistics, with eigenvalue-ratio rank selection;
//! 2. [`local`]: loading spaces of `Gamma_m` and `Lambda_m` from lagged
//!    autocovariances of the data projected onto the global complements;
//! 3. [`signal`]: normalized factors and the global/local signal parts.
//!
//! [`simulator`] generates panels from the model, [`metrics`] scores fits
//! and [`pipeline`] drives simulations, sweeps and reports from a config.

// `!(x > 0.0)` style checks are there to catch NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod global;
pub mod local;
pub mod metrics;
pub mod model;
mod moments;
pub mod numerics;
pub mod pipeline;
pub mod signal;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
pub use model::{fit, EstimatorConfig};
pub use types::{
    validate_panel, FactorDims, FitResult, GroupLoadings, GroupSeries, GroupedPanel, LoadingSet, Mat,
    ValidationReport,
};
