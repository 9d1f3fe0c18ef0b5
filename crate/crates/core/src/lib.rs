//! Bayesian clustering of multivariate longitudinal trajectories.
//!
//! Each subject follows a first-order vector autoregression whose transition
//! matrix is drawn from a finite mixture. Mixture weights depend on baseline
//! covariates through logit stick-breaking, and missing responses are imputed
//! exactly inside the Gibbs sampler.

pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod linalg;
pub mod missing;
pub mod model;
pub mod postprocess;
pub mod priors;
pub mod simulation;

pub use error::{Error, Result};
