//! Continual linear regression laboratory.
//!
//! A sequence of regression tasks arrives one at a time; each task holds a
//! fixed design matrix and noisy labels from a shared true parameter. The
//! crate implements five update rules (pooled oracle least squares,
//! generalized l2-regularization, continual ridge, minimum norm, and
//! early-stopping gradient descent), the closed-form estimation-error theory
//! that predicts their behaviour under commuting task covariances, and a
//! seeded Monte Carlo harness that checks the two against each other.
//!
//! Modules:
//! - [`model`]: task data, synthetic generators, spectral utilities.
//! - [`estimators`]: the update rules and the sequence driver.
//! - [`theory`]: closed-form errors, optimal weights, lower bounds, and the
//!   early-stopping / regularization correspondence.
//! - [`metrics`]: error metrics and the replicated experiment runner.
//! - [`rng`]: keyed, splittable random streams for reproducible experiments.

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod theory;

pub use error::{CoreError, Result};
