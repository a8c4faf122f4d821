//! Learning discrete Bayesian network structures from incomplete data by
//! jointly searching over structures and imputed missing values with three
//! stochastic engines: an evolutionary algorithm, Metropolis-Hastings MCMC
//! chains, and the hybrid evolutionary MCMC, plus adaptive
//! population-informed proposals and an evaluation harness (BD score,
//! holdout log loss, Gelman-Rubin convergence, best-so-far and diversity
//! curves).

pub mod benchmark;
pub mod bn;
pub mod dataset;
pub mod diagnostics;
pub mod engines;
pub mod error;
pub mod moves;
pub mod scoring;
pub mod stream;

pub use error::{Error, Result};
