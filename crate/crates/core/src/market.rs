//! Wholesale market model: quadratic inverse supply curve, the threshold
//! market clearing (TMC) price, and the optimal load reduction.

use crate::error::{Error, Result};

/// Quadratic inverse supply curve `Pi(Q) = a Q + b Q^2` with a validity range
/// and the peak load the reduction is measured from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketModel {
    /// Linear coefficient ($/energy unit per energy unit).
    pub a: f64,
    /// Quadratic coefficient ($/energy unit per energy unit squared).
    pub b: f64,
    /// Quantity interval on which the fitted curve is considered valid.
    pub q_range: (f64, f64),
    /// Peak load.
    pub q0: f64,
}

/// Result of the optimal-reduction first-order condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionSolution {
    /// Optimal reduction `Q0 - q_clear`.
    pub delta_q_star: f64,
    /// Post-reduction clearing quantity.
    pub q_clear: f64,
    /// TMC price `Pi(q_clear)`.
    pub pi_star: f64,
    /// Whether `q_clear` lies inside the fitted range.
    pub in_range: bool,
}

/// A named violation of the market-model assumptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarketViolation {
    /// `Pi'(Q) <= 0` somewhere on the range.
    Monotonicity,
    /// `b < 0`.
    Convexity,
    /// `Q0` outside the range.
    PeakLoadOutOfRange,
}

impl std::fmt::Display for MarketViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MarketViolation::Monotonicity => write!(f, "supply curve is not increasing on the range"),
            MarketViolation::Convexity => write!(f, "supply curve is not convex (b < 0)"),
            MarketViolation::PeakLoadOutOfRange => write!(f, "peak load lies outside the range"),
        }
    }
}

impl MarketModel {
    pub fn new(a: f64, b: f64, q_range: (f64, f64), q0: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && q0.is_finite()) {
            return Err(Error::InvalidParameter("market coefficients must be finite".into()));
        }
        if !(q_range.0.is_finite() && q_range.1.is_finite() && q_range.0 < q_range.1) {
            return Err(Error::InvalidParameter(format!(
                "quantity range [{}, {}] must be finite with lo < hi",
                q_range.0, q_range.1
            )));
        }
        Ok(Self { a, b, q_range, q0 })
    }
}

/// Supply price `Pi(Q) = a Q + b Q^2`. Evaluation is permitted outside the
/// fitted range; range membership is reported downstream via `in_range`.
pub fn supply_price(m: &MarketModel, q: f64) -> f64 {
    m.a * q + m.b * q * q
}

/// Derivative `Pi'(Q) = a + 2 b Q`.
pub fn supply_price_derivative(m: &MarketModel, q: f64) -> f64 {
    m.a + 2.0 * m.b * q
}

/// Solves the reduction first-order condition `Pi'(q_clear) = pi0 / Q0`:
/// `q_clear = (pi0 / Q0 - a) / (2 b)`, `delta_q_star = Q0 - q_clear`, and the
/// TMC price `pi_star = Pi(q_clear)`.
pub fn optimal_reduction(m: &MarketModel, pi0: f64) -> Result<ReductionSolution> {
    if m.b == 0.0 {
        return Err(Error::Domain(
            "linear supply curve: the first-order condition has no unique clearing quantity".into(),
        ));
    }
    let q_clear = (pi0 / m.q0 - m.a) / (2.0 * m.b);
    Ok(ReductionSolution {
        delta_q_star: m.q0 - q_clear,
        q_clear,
        pi_star: supply_price(m, q_clear),
        in_range: q_clear >= m.q_range.0 && q_clear <= m.q_range.1,
    })
}

/// TMC price for a given reduction: `Pi(Q0 - delta_q)`.
pub fn tmc_price(m: &MarketModel, delta_q: f64) -> f64 {
    supply_price(m, m.q0 - delta_q)
}

/// Checks the standing assumptions; an empty list means the model is valid.
pub fn validate_market(m: &MarketModel) -> Vec<MarketViolation> {
    let mut v = Vec::new();
    // Pi' is affine, so positivity on the range reduces to the endpoints
    if supply_price_derivative(m, m.q_range.0) <= 0.0 || supply_price_derivative(m, m.q_range.1) <= 0.0 {
        v.push(MarketViolation::Monotonicity);
    }
    if m.b < 0.0 {
        v.push(MarketViolation::Convexity);
    }
    if m.q0 < m.q_range.0 || m.q0 > m.q_range.1 {
        v.push(MarketViolation::PeakLoadOutOfRange);
    }
    v
}
