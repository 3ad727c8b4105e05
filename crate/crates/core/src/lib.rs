//! Closed-form MAP estimation for families whose density is a gamma law on
//! a transformed variable T(X), plus exact samplers, numeric MAP/ML
//! baselines and a reproducible Monte Carlo harness.

pub mod baselines;
pub mod cli;
pub mod estimators;
pub mod generators;
pub mod montecarlo;
pub mod optimize;
pub mod sampling;
pub mod special;
pub mod statistics;
