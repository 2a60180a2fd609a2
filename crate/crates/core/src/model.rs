//! Primitive model objects: quadratic consumer utility, penalty families,
//! the theta uncertainty distribution, and mechanism parameters.
//!
//! The consumer utility is `u(q, theta) = (c + theta) q - q^2 / (2 d)`, so the
//! marginal utility `mu(q, theta) = (c + theta) - q / d` is affine in `q` and
//! theta shifts the intercept. The penalty is `phi(x) = x^2 / (2 lambda)`,
//! optionally with a deadband of half-width `epsilon` around zero.

use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Distribution of the exogenous uncertainty entering the marginal-utility
/// intercept. All supported families have bounded support.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaDist {
    /// Point mass at `location`.
    Degenerate { location: f64 },
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Normal with the given mean and standard deviation, truncated to `[lo, hi]`.
    TruncatedNormal { mean: f64, std_dev: f64, lo: f64, hi: f64 },
}

impl ThetaDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThetaDist::Degenerate { location } => {
                if !location.is_finite() {
                    return Err(Error::InvalidParameter("degenerate location must be finite".into()));
                }
            }
            ThetaDist::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidParameter(format!(
                        "uniform support [{lo}, {hi}] must be finite with lo < hi"
                    )));
                }
            }
            ThetaDist::TruncatedNormal { mean, std_dev, lo, hi } => {
                if !(mean.is_finite() && std_dev.is_finite() && std_dev > 0.0) {
                    return Err(Error::InvalidParameter("truncated normal needs finite mean, std_dev > 0".into()));
                }
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidParameter(format!(
                        "truncation bounds [{lo}, {hi}] must be finite with lo < hi"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Support as a closed interval `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ThetaDist::Degenerate { location } => (location, location),
            ThetaDist::Uniform { lo, hi } => (lo, hi),
            ThetaDist::TruncatedNormal { lo, hi, .. } => (lo, hi),
        }
    }

    /// Exact mean of the distribution.
    pub fn mean(&self) -> f64 {
        match *self {
            ThetaDist::Degenerate { location } => location,
            ThetaDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            ThetaDist::TruncatedNormal { mean, std_dev, lo, hi } => {
                let n = Normal::new(0.0, 1.0).expect("unit normal");
                let a = (lo - mean) / std_dev;
                let b = (hi - mean) / std_dev;
                let z = n.cdf(b) - n.cdf(a);
                mean + std_dev * (n.pdf(a) - n.pdf(b)) / z
            }
        }
    }

    /// Density of the distribution at `x`, used for quadrature weighting.
    /// The degenerate case has no density; callers special-case it.
    pub(crate) fn density(&self, x: f64) -> f64 {
        match *self {
            ThetaDist::Degenerate { .. } => panic!("degenerate distribution has no density"),
            ThetaDist::Uniform { lo, hi } => {
                if x >= lo && x <= hi { 1.0 / (hi - lo) } else { 0.0 }
            }
            ThetaDist::TruncatedNormal { mean, std_dev, lo, hi } => {
                if x < lo || x > hi {
                    return 0.0;
                }
                let n = Normal::new(mean, std_dev).expect("normal");
                let z = n.cdf(hi) - n.cdf(lo);
                n.pdf(x) / z
            }
        }
    }

    /// Draw one sample. Truncated normals use inverse-CDF sampling so the
    /// number of RNG words consumed is fixed.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ThetaDist::Degenerate { location } => location,
            ThetaDist::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            ThetaDist::TruncatedNormal { mean, std_dev, lo, hi } => {
                let n = Normal::new(mean, std_dev).expect("normal");
                let (ca, cb) = (n.cdf(lo), n.cdf(hi));
                let u = ca + (cb - ca) * rng.gen::<f64>();
                n.inverse_cdf(u).clamp(lo, hi)
            }
        }
    }
}

/// One consumer's private model: quadratic utility coefficients and the
/// distribution of the intercept shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumerParams {
    /// Marginal-utility intercept ($/energy unit).
    pub c: f64,
    /// Inverse rate of diminishment of marginal utility ((energy unit)^2/$).
    pub d: f64,
    pub theta_dist: ThetaDist,
}

impl ConsumerParams {
    pub fn new(c: f64, d: f64, theta_dist: ThetaDist) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidParameter(format!("d must be strictly positive, got {d}")));
        }
        if !c.is_finite() {
            return Err(Error::InvalidParameter("c must be finite".into()));
        }
        theta_dist.validate()?;
        Ok(Self { c, d, theta_dist })
    }

    /// Checks that every consumption the mechanism can induce stays positive
    /// over the whole theta support.
    pub fn validate_against(&self, mech: &MechanismParams) -> Result<()> {
        let (lo, _) = self.theta_dist.support();
        if self.c <= mech.pi0 {
            return Err(Error::InvalidParameter(format!(
                "intercept c = {} must exceed the retail price pi0 = {}",
                self.c, mech.pi0
            )));
        }
        if self.c + lo - mech.pi0 - mech.pi2 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "theta support floor {lo} drives the called consumption negative \
                 (c + theta - pi0 - pi2 = {})",
                self.c + lo - mech.pi0 - mech.pi2
            )));
        }
        Ok(())
    }
}

/// Penalty family: `phi(x) = x^2 / (2 lambda)` outside a deadband of
/// half-width `epsilon`; `epsilon = 0` is the pure quadratic.
///
/// `lambda = +inf` is the explicit no-penalty escape hatch (`phi == 0`) used
/// for degenerate-case analysis; solvers that need strict convexity reject it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    /// Penalty curvature parameter ((energy unit)^2/$): `phi''(x) = 1/lambda`
    /// outside the deadband.
    pub lambda: f64,
    /// Deadband half-width (energy units, >= 0).
    pub epsilon: f64,
}

impl PenaltySpec {
    pub fn quadratic(lambda: f64) -> Result<Self> {
        Self::new(lambda, 0.0)
    }

    pub fn with_deadband(lambda: f64, epsilon: f64) -> Result<Self> {
        Self::new(lambda, epsilon)
    }

    /// `phi == 0` everywhere; only valid for cost evaluation, not for solving.
    pub fn none() -> Self {
        Self { lambda: f64::INFINITY, epsilon: 0.0 }
    }

    fn new(lambda: f64, epsilon: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(Self { lambda, epsilon })
    }

    pub fn is_none(&self) -> bool {
        self.lambda.is_infinite()
    }

    pub fn has_deadband(&self) -> bool {
        self.epsilon > 0.0
    }
}

/// Mechanism-side prices and probabilities announced in the reporting stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismParams {
    /// Retail price ($/energy unit).
    pub pi0: f64,
    /// Reward per unit of measured reduction ($/energy unit); equals the TMC
    /// price when derived from a market model.
    pub pi2: f64,
    /// Probability that a recruited consumer is called during an event.
    pub p: f64,
    pub penalty: PenaltySpec,
}

impl MechanismParams {
    pub fn new(pi0: f64, pi2: f64, p: f64, penalty: PenaltySpec) -> Result<Self> {
        if !(pi0.is_finite() && pi0 > 0.0) {
            return Err(Error::InvalidParameter(format!("pi0 must be > 0, got {pi0}")));
        }
        if !(pi2.is_finite() && pi2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("pi2 must be >= 0, got {pi2}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(Self { pi0, pi2, p, penalty })
    }

    /// First-order-condition target `p pi2 / (1 - p)` for the report solver.
    pub fn stationarity_target(&self) -> f64 {
        self.p * self.pi2 / (1.0 - self.p)
    }
}

/// Utility of consuming `q` at realized shift `theta`, in dollars.
pub fn utility_value(params: &ConsumerParams, q: f64, theta: f64) -> Result<f64> {
    if q < 0.0 {
        return Err(Error::Domain(format!("consumption must be nonnegative, got {q}")));
    }
    Ok((params.c + theta) * q - q * q / (2.0 * params.d))
}

/// Marginal utility `mu(q, theta) = (c + theta) - q / d`.
pub fn marginal_utility(params: &ConsumerParams, q: f64, theta: f64) -> Result<f64> {
    if q < 0.0 {
        return Err(Error::Domain(format!("consumption must be nonnegative, got {q}")));
    }
    Ok(params.c + theta - q / params.d)
}

/// Inverse marginal utility: the consumption at which `mu(q, theta) = x`.
pub fn inverse_marginal_utility(params: &ConsumerParams, x: f64, theta: f64) -> Result<f64> {
    let intercept = params.c + theta;
    if x > intercept {
        return Err(Error::Domain(format!(
            "marginal utility level {x} exceeds the intercept {intercept}; consumption would be negative"
        )));
    }
    Ok(params.d * (intercept - x))
}

/// Penalty for a deviation `x` from the reported baseline.
pub fn penalty_value(spec: &PenaltySpec, x: f64) -> f64 {
    let a = x.abs();
    if a <= spec.epsilon {
        0.0
    } else {
        let t = a - spec.epsilon;
        t * t / (2.0 * spec.lambda)
    }
}

/// Derivative of the penalty; odd in `x`, zero inside the deadband.
pub fn penalty_derivative(spec: &PenaltySpec, x: f64) -> f64 {
    let a = x.abs();
    if a <= spec.epsilon {
        0.0
    } else {
        x.signum() * (a - spec.epsilon) / spec.lambda
    }
}

/// Inverse of the penalty derivative on the positive branch. For the deadband
/// family this is the limit of the smoothed inverse: `lambda y + epsilon`.
pub fn penalty_derivative_inverse(spec: &PenaltySpec, y: f64) -> Result<f64> {
    if y <= 0.0 {
        return Err(Error::Domain(format!(
            "penalty derivative inverse requires y > 0 (not unique at 0), got {y}"
        )));
    }
    if spec.is_none() {
        return Err(Error::Contract("no-penalty spec has no invertible derivative".into()));
    }
    Ok(spec.lambda * y + spec.epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn table_consumer(d: f64) -> ConsumerParams {
        ConsumerParams::new(0.5, d, ThetaDist::Degenerate { location: 0.0 }).unwrap()
    }

    #[test]
    fn utility_at_zero_consumption_is_zero() {
        let p = table_consumer(0.1);
        assert_eq!(utility_value(&p, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn utility_matches_polynomial_evaluation() {
        let p = table_consumer(0.1);
        // oracle: direct evaluation of (c + theta) q - q^2 / (2 d)
        let poly = |c: f64, d: f64, q: f64, th: f64| (c + th) * q - q * q / (2.0 * d);
        assert_abs_diff_eq!(utility_value(&p, 0.038, 0.0).unwrap(), poly(0.5, 0.1, 0.038, 0.0));
        assert_abs_diff_eq!(utility_value(&p, 0.038, 0.0).unwrap(), 0.01178, epsilon = 1e-15);
        assert_abs_diff_eq!(utility_value(&p, 0.038, 0.01).unwrap(), 0.01216, epsilon = 1e-15);
    }

    #[test]
    fn utility_rejects_negative_consumption() {
        let p = table_consumer(0.1);
        assert!(utility_value(&p, -0.01, 0.0).is_err());
    }

    #[test]
    fn marginal_utility_values() {
        let p = table_consumer(0.1);
        assert_eq!(marginal_utility(&p, 0.0, 0.0).unwrap(), 0.5);
        assert_abs_diff_eq!(marginal_utility(&p, 0.038, 0.0).unwrap(), 0.12, epsilon = 1e-15);
        assert_abs_diff_eq!(marginal_utility(&p, 0.033, 0.0).unwrap(), 0.17, epsilon = 1e-15);
    }

    /// Bisection on mu(q) = x as an oracle for the closed-form inverse.
    fn invert_mu_by_bisection(p: &ConsumerParams, x: f64, theta: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, p.d * (p.c + theta) + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = p.c + theta - mid / p.d;
            if v > x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inverse_marginal_utility_matches_bisection_oracle() {
        let p = table_consumer(0.1);
        for (x, expect) in [(0.12, 0.038), (0.17, 0.033)] {
            let q = inverse_marginal_utility(&p, x, 0.0).unwrap();
            assert_relative_eq!(q, invert_mu_by_bisection(&p, x, 0.0), epsilon = 1e-10);
            assert_abs_diff_eq!(q, expect, epsilon = 1e-12);
            assert_abs_diff_eq!(marginal_utility(&p, q, 0.0).unwrap(), x, epsilon = 1e-12);
        }
        assert_eq!(inverse_marginal_utility(&p, 0.5, 0.0).unwrap(), 0.0);
        assert!(inverse_marginal_utility(&p, 0.51, 0.0).is_err());
    }

    #[test]
    fn penalty_values() {
        let quad = PenaltySpec::quadratic(0.1).unwrap();
        assert_abs_diff_eq!(penalty_value(&quad, 0.01), 0.0005, epsilon = 1e-15);
        let db = PenaltySpec::with_deadband(0.1, 0.02).unwrap();
        assert_eq!(penalty_value(&db, 0.01), 0.0);
        assert_abs_diff_eq!(penalty_value(&db, -0.03), 0.0005, epsilon = 1e-15);
    }

    #[test]
    fn penalty_derivative_values() {
        let quad = PenaltySpec::quadratic(0.1).unwrap();
        // oracle: central finite difference of penalty_value
        let h = 1e-8;
        let x = 0.000556;
        let fd = (penalty_value(&quad, x + h) - penalty_value(&quad, x - h)) / (2.0 * h);
        assert_relative_eq!(penalty_derivative(&quad, x), fd, epsilon = 1e-6);
        assert_abs_diff_eq!(penalty_derivative(&quad, x), 0.00556, epsilon = 1e-15);
        let db = PenaltySpec::with_deadband(0.1, 0.02).unwrap();
        assert_eq!(penalty_derivative(&db, 0.01), 0.0);
        assert_abs_diff_eq!(penalty_derivative(&quad, -0.01), -0.1, epsilon = 1e-15);
    }

    #[test]
    fn penalty_derivative_inverse_values() {
        let quad = PenaltySpec::quadratic(0.1).unwrap();
        assert_abs_diff_eq!(penalty_derivative_inverse(&quad, 0.00556).unwrap(), 0.000556, epsilon = 1e-15);
        let db = PenaltySpec::with_deadband(0.1, 0.005).unwrap();
        assert_abs_diff_eq!(penalty_derivative_inverse(&db, 0.00556).unwrap(), 0.005556, epsilon = 1e-15);
        let quad2 = PenaltySpec::quadratic(0.2).unwrap();
        assert_abs_diff_eq!(penalty_derivative_inverse(&quad2, 0.01).unwrap(), 0.002, epsilon = 1e-15);
        assert!(penalty_derivative_inverse(&quad, 0.0).is_err());
        assert!(penalty_derivative_inverse(&quad, -0.1).is_err());
    }

    #[test]
    fn penalty_inverse_round_trip() {
        for spec in [
            PenaltySpec::quadratic(0.1).unwrap(),
            PenaltySpec::with_deadband(0.1, 0.005).unwrap(),
            PenaltySpec::with_deadband(0.35, 0.02).unwrap(),
        ] {
            for y in [1e-6, 3e-4, 0.01, 0.5] {
                let x = penalty_derivative_inverse(&spec, y).unwrap();
                assert_relative_eq!(penalty_derivative(&spec, x), y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn truncated_normal_mean_and_sampling() {
        let dist = ThetaDist::TruncatedNormal { mean: 0.0, std_dev: 0.02, lo: -0.05, hi: 0.05 };
        dist.validate().unwrap();
        // symmetric truncation keeps the mean at the center
        assert_abs_diff_eq!(dist.mean(), 0.0, epsilon = 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        use rand::SeedableRng;
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x = dist.sample(&mut rng);
            assert!((-0.05..=0.05).contains(&x));
            acc += x;
        }
        // 3 sigma / sqrt(n) bound with sigma < 0.02
        assert!((acc / n as f64).abs() < 3.0 * 0.02 / (n as f64).sqrt());
    }

    #[test]
    fn parameter_validation() {
        assert!(ConsumerParams::new(0.5, 0.0, ThetaDist::Degenerate { location: 0.0 }).is_err());
        assert!(ConsumerParams::new(0.5, -0.1, ThetaDist::Degenerate { location: 0.0 }).is_err());
        assert!(PenaltySpec::quadratic(0.0).is_err());
        assert!(MechanismParams::new(0.12, 0.05, 1.5, PenaltySpec::quadratic(0.1).unwrap()).is_err());
        let mech = MechanismParams::new(0.12, 0.05, 0.1, PenaltySpec::quadratic(0.1).unwrap()).unwrap();
        let p = table_consumer(0.1);
        p.validate_against(&mech).unwrap();
        let bad = ConsumerParams::new(0.13, 0.1, ThetaDist::Uniform { lo: -0.05, hi: 0.05 }).unwrap();
        assert!(bad.validate_against(&mech).is_err());
    }
}
