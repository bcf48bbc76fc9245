//! Heteroscedastic accelerated failure time (HAFT) models.
//!
//! log T = W'β + exp(Z'γ/2)·ε with ε ~ N(0, 1), fitted by maximum likelihood
//! (alternating conditional maximization for complete data, ECM under right
//! censoring), with Wald inference, survival prediction and PIT residuals.

pub mod cli;
pub mod error;
pub mod fit;
pub mod inference;
pub mod model;
pub mod numkernel;
pub mod par;
pub mod predict;
pub mod residuals;
pub mod simulate;

pub use error::{HaftError, Result};
