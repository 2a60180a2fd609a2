//! Simulation and analysis engine for an incentive-based demand-response
//! mechanism with self-reported baselines.
//!
//! The crate solves the consumer's two-stage stochastic optimization, checks
//! the closed-form baseline-inflation results against numeric solvers and
//! Monte Carlo settlement, evaluates system-operator cost as a function of
//! the calling probability, and benchmarks the self-reported baseline against
//! an averaging estimator with a same-day adjustment factor.
//!
//! With the `parallel` feature (on by default) the event simulator fans out
//! over a rayon pool; results are bit-identical to the sequential path for a
//! fixed seed because every event owns a counter-derived RNG stream and
//! aggregation folds in event order.

pub mod caiso;
pub mod consumer;
pub mod error;
pub mod expectation;
pub mod market;
pub mod mechanism;
pub mod model;

pub use error::{Error, Result};
