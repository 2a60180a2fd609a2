//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by model evaluation, solvers, and the mechanism simulator.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter violates a structural invariant (e.g. `d <= 0`).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation was evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was called under conditions its contract excludes.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The root finder could not bracket a sign change.
    #[error("bracketing failure on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    Bracketing { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },

    /// The root finder ran out of iterations.
    #[error("no convergence after {iterations} iterations, residual {residual}")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Recruitment could not assemble the requested groups.
    #[error("recruitment failure: group {group} short by {shortfall} (target {target})")]
    Recruitment { group: usize, shortfall: f64, target: f64 },

    /// A simulation horizon does not provide the required history windows.
    #[error("horizon error: {0}")]
    Horizon(String),
}

pub type Result<T> = std::result::Result<T, Error>;
