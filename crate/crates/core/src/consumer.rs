//! The consumer's two-stage problem.
//!
//! Second stage: optimal consumptions for the three participation cases
//! (`q_a` outside the program, `q_b` enrolled but not called, `q_c` called).
//! First stage: the expected cost `H(f)` of a baseline report `f`, the
//! expected marginal utility `M(f)`, the optimal report `f*`, and the
//! inflation metrics derived from it.
//!
//! For the quadratic utility and quadratic (possibly deadbanded) penalty all
//! second-stage problems have closed forms; the report solver brackets and
//! bisects the monotone stationarity map `f -> E phi'(f - q_b(f, theta))`.

use crate::error::{Error, Result};
use crate::expectation::{theta_nodes, ThetaGrid, ThetaSamplePlan};
use crate::model::{
    inverse_marginal_utility, marginal_utility, penalty_derivative, penalty_value, utility_value,
    ConsumerParams, MechanismParams,
};

/// Hard iteration cap for the report bisection.
const MAX_BISECT_ITERS: usize = 256;

/// Absolute width at which the report bisection stops refining.
const REPORT_WIDTH_TOL: f64 = 1e-12;

/// Optimal second-stage consumptions at one realized theta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondStageResult {
    /// Non-participant consumption (the true baseline).
    pub q_a: f64,
    /// Enrolled, not called.
    pub q_b: f64,
    /// Enrolled and called.
    pub q_c: f64,
    pub theta: f64,
    /// Report the `q_b` best-response was computed against.
    pub f: f64,
}

impl SecondStageResult {
    /// Solves all three cases at one theta.
    pub fn solve(params: &ConsumerParams, mech: &MechanismParams, f: f64, theta: f64) -> Result<Self> {
        let q_a = consumption_nonparticipant(params, mech.pi0, theta)?;
        let q_b = consumption_not_called(params, mech, f, theta)?;
        let q_c = consumption_called(params, mech.pi0, mech.pi2, theta)?;
        debug_assert!(q_c <= q_a);
        debug_assert!((q_a <= q_b && q_b <= f) || (f <= q_b && q_b <= q_a));
        Ok(Self { q_a, q_b, q_c, theta, f })
    }
}

/// Output of the optimal-report solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportSolution {
    pub f_star: f64,
    /// `H(f*)` under the same sample plan used by the solve.
    pub expected_cost: f64,
    /// `f* - E q_a` (inflation against the expected true baseline).
    pub expected_inflation: f64,
    /// `E [f* - q_b(f*, theta)]` (the deviation the operator can observe).
    pub measurable_inflation: f64,
    /// Stationarity residual at `f*`.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Inflation metrics, with closed-form values where available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflationReport {
    pub f_star: f64,
    /// `f* - E q_a`.
    pub delta_f: f64,
    /// `E [f* - q_b]`.
    pub delta_f_tilde: f64,
    /// Closed-form inflation, when the quadratic/quadratic form applies.
    pub theory_value: Option<f64>,
    /// Deadband upper bound, when a deadband is present.
    pub theory_bound: Option<f64>,
}

/// Individual-rationality comparison between enrolling and staying outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RationalityCheck {
    pub rational: bool,
    /// `H(f)` for the enrolled consumer.
    pub participant_cost: f64,
    /// Expected optimal cost outside the program.
    pub outside_cost: f64,
}

/// Consumption of a consumer outside the program: `mu^{-1}(pi0, theta)`.
pub fn consumption_nonparticipant(params: &ConsumerParams, pi0: f64, theta: f64) -> Result<f64> {
    inverse_marginal_utility(params, pi0, theta)
}

/// Consumption of a called consumer: `mu^{-1}(pi0 + pi2, theta)`, independent
/// of the report.
pub fn consumption_called(params: &ConsumerParams, pi0: f64, pi2: f64, theta: f64) -> Result<f64> {
    inverse_marginal_utility(params, pi0 + pi2, theta)
}

/// Consumption of an enrolled, uncalled consumer: the root of
/// `pi0 - mu(q, theta) - phi'(f - q) = 0`.
///
/// The first-order condition is piecewise affine in `q`, so the root is found
/// by case-splitting on the three regions of `phi'`; ties at the kinks
/// resolve to the deadband interior.
pub fn consumption_not_called(
    params: &ConsumerParams,
    mech: &MechanismParams,
    f: f64,
    theta: f64,
) -> Result<f64> {
    if f < 0.0 {
        return Err(Error::Domain(format!("baseline report must be nonnegative, got {f}")));
    }
    let q_a = consumption_nonparticipant(params, mech.pi0, theta)?;
    let pen = &mech.penalty;
    if pen.is_none() {
        return Ok(q_a);
    }
    let (d, lambda, eps) = (params.d, pen.lambda, pen.epsilon);
    let q = if (f - q_a).abs() <= eps {
        // phi' = 0 branch: the deviation lands inside the deadband
        q_a
    } else if f - q_a > eps {
        (lambda * q_a + d * (f - eps)) / (d + lambda)
    } else {
        (lambda * q_a + d * (f + eps)) / (d + lambda)
    };
    if q < 0.0 {
        return Err(Error::Domain(format!(
            "uncalled consumption is negative ({q}) for f = {f}, theta = {theta}"
        )));
    }
    Ok(q)
}

/// Realized cost of a non-participant at its optimal consumption.
fn outside_cost_at(params: &ConsumerParams, pi0: f64, theta: f64) -> Result<f64> {
    let q = consumption_nonparticipant(params, pi0, theta)?;
    Ok(pi0 * q - utility_value(params, q, theta)?)
}

/// Realized cost of an uncalled participant at its optimal consumption.
fn uncalled_cost_at(params: &ConsumerParams, mech: &MechanismParams, f: f64, theta: f64) -> Result<f64> {
    let q = consumption_not_called(params, mech, f, theta)?;
    Ok(mech.pi0 * q - utility_value(params, q, theta)? + penalty_value(&mech.penalty, f - q))
}

/// Realized cost of a called participant at its optimal consumption.
fn called_cost_at(params: &ConsumerParams, mech: &MechanismParams, f: f64, theta: f64) -> Result<f64> {
    let q = consumption_called(params, mech.pi0, mech.pi2, theta)?;
    Ok(mech.pi0 * q - utility_value(params, q, theta)? - mech.pi2 * (f - q))
}

/// Expected cost of reporting `f`:
/// `H(f) = p E J_c + (1 - p) E J_b`, each term at its optimal consumption.
pub fn expected_cost(
    params: &ConsumerParams,
    mech: &MechanismParams,
    f: f64,
    plan: &ThetaSamplePlan,
) -> Result<f64> {
    let grid = theta_nodes(&params.theta_dist, plan)?;
    expected_cost_on(params, mech, f, &grid)
}

pub fn expected_cost_on(
    params: &ConsumerParams,
    mech: &MechanismParams,
    f: f64,
    grid: &ThetaGrid,
) -> Result<f64> {
    let called = grid.try_expect(|t| called_cost_at(params, mech, f, t))?;
    let uncalled = grid.try_expect(|t| uncalled_cost_at(params, mech, f, t))?;
    Ok(mech.p * called + (1.0 - mech.p) * uncalled)
}

/// Expected marginal utility under the mechanism:
/// `M(f) = p E mu(q_c) + (1 - p) E mu(q_b(f))`.
pub fn expected_marginal_utility(
    params: &ConsumerParams,
    mech: &MechanismParams,
    f: f64,
    plan: &ThetaSamplePlan,
) -> Result<f64> {
    let grid = theta_nodes(&params.theta_dist, plan)?;
    expected_marginal_utility_on(params, mech, f, &grid)
}

pub fn expected_marginal_utility_on(
    params: &ConsumerParams,
    mech: &MechanismParams,
    f: f64,
    grid: &ThetaGrid,
) -> Result<f64> {
    let called = grid.try_expect(|t| {
        let q = consumption_called(params, mech.pi0, mech.pi2, t)?;
        marginal_utility(params, q, t)
    })?;
    let uncalled = grid.try_expect(|t| {
        let q = consumption_not_called(params, mech, f, t)?;
        marginal_utility(params, q, t)
    })?;
    Ok(mech.p * called + (1.0 - mech.p) * uncalled)
}

/// Expected penalty slope at report `f`: `E phi'(f - q_b(f, theta))`.
fn stationarity_lhs(
    params: &ConsumerParams,
    mech: &MechanismParams,
    f: f64,
    grid: &ThetaGrid,
) -> Result<f64> {
    grid.try_expect(|t| {
        let q = consumption_not_called(params, mech, f, t)?;
        Ok(penalty_derivative(&mech.penalty, f - q))
    })
}

/// Solves for the optimal baseline report `f*`.
///
/// The stationarity map `g(f) = E phi'(f - q_b(f, theta)) - p pi2 / (1 - p)`
/// is continuous and nondecreasing (the report sensitivity of `q_b` is below
/// one), so a bracket-then-bisect search is globally convergent. `tol` bounds
/// the stationarity residual at the returned report.
pub fn solve_optimal_report(
    params: &ConsumerParams,
    mech: &MechanismParams,
    plan: &ThetaSamplePlan,
    tol: f64,
) -> Result<ReportSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("solver tolerance must be > 0, got {tol}")));
    }
    if mech.penalty.is_none() {
        return Err(Error::Contract(
            "report solver needs a penalty that is strictly convex outside the deadband".into(),
        ));
    }
    let grid = theta_nodes(&params.theta_dist, plan)?;
    let target = mech.stationarity_target();
    let mean_qa = grid.try_expect(|t| consumption_nonparticipant(params, mech.pi0, t))?;

    if target == 0.0 {
        // zero calling probability or zero reward: reporting the expected
        // baseline is stationary (and the unique minimizer for epsilon = 0)
        let f = mean_qa;
        let residual = stationarity_lhs(params, mech, f, &grid)?;
        return Ok(ReportSolution {
            f_star: f,
            expected_cost: expected_cost_on(params, mech, f, &grid)?,
            expected_inflation: 0.0,
            measurable_inflation: f - grid.try_expect(|t| consumption_not_called(params, mech, f, t))?,
            residual,
            converged: residual.abs() <= tol,
            iterations: 0,
        });
    }

    let g = |f: f64| -> Result<f64> { Ok(stationarity_lhs(params, mech, f, &grid)? - target) };

    let (support_lo, support_hi) = params.theta_dist.support();
    let spread = params.d * (support_hi - support_lo);
    let scale = ((params.d + mech.penalty.lambda) * target + mech.penalty.epsilon + spread)
        .max(1e-9 * mean_qa.abs().max(1.0));
    let mut lo = mean_qa;
    let mut hi = mean_qa + scale * (1.0 + 1e-6);
    let mut g_lo = g(lo)?;
    let mut g_hi = g(hi)?;
    let mut width = scale;
    let mut expansions = 0;
    while g_lo > 0.0 && expansions < 64 {
        hi = lo;
        g_hi = g_lo;
        lo = (lo - width).max(0.0);
        g_lo = g(lo)?;
        width *= 2.0;
        expansions += 1;
    }
    while g_hi < 0.0 && expansions < 64 {
        lo = hi;
        g_lo = g_hi;
        hi += width;
        g_hi = g(hi)?;
        width *= 2.0;
        expansions += 1;
    }
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::Bracketing { lo, hi, g_lo, g_hi });
    }

    let mut f = 0.5 * (lo + hi);
    let mut residual = g(f)?;
    let mut iterations = 0;
    while iterations < MAX_BISECT_ITERS {
        iterations += 1;
        if residual.abs() <= tol || (hi - lo) <= REPORT_WIDTH_TOL {
            break;
        }
        if residual < 0.0 {
            lo = f;
        } else {
            hi = f;
        }
        f = 0.5 * (lo + hi);
        residual = g(f)?;
    }
    if residual.abs() > tol && (hi - lo) > REPORT_WIDTH_TOL {
        return Err(Error::NonConvergence { iterations, residual });
    }

    let mean_qb = grid.try_expect(|t| consumption_not_called(params, mech, f, t))?;
    Ok(ReportSolution {
        f_star: f,
        expected_cost: expected_cost_on(params, mech, f, &grid)?,
        expected_inflation: f - mean_qa,
        measurable_inflation: f - mean_qb,
        residual,
        converged: residual.abs() <= tol,
        iterations,
    })
}

/// Closed-form optimal report for the quadratic utility / pure quadratic
/// penalty pair: inflation `(d + lambda) p pi2 / (1 - p)` and measurable
/// inflation `lambda p pi2 / (1 - p)`.
pub fn optimal_report_closed_form(
    params: &ConsumerParams,
    mech: &MechanismParams,
) -> Result<InflationReport> {
    if mech.penalty.is_none() {
        return Err(Error::Contract("closed form needs a finite quadratic penalty".into()));
    }
    if mech.penalty.has_deadband() {
        return Err(Error::Contract(
            "closed form applies to the pure quadratic penalty; use the deadband bound instead".into(),
        ));
    }
    let target = mech.stationarity_target();
    let delta_f = (params.d + mech.penalty.lambda) * target;
    let mean_qa = params.d * (params.c + params.theta_dist.mean() - mech.pi0);
    Ok(InflationReport {
        f_star: mean_qa + delta_f,
        delta_f,
        delta_f_tilde: mech.penalty.lambda * target,
        theory_value: Some(delta_f),
        theory_bound: None,
    })
}

/// Upper bound on the inflation of the optimal report under a deadband
/// penalty: `(d + lambda) p pi2 / (1 - p) + epsilon`.
///
/// Requires the deadband to cover the spread of the true baseline over the
/// theta support; under that condition the mechanism is also individually
/// rational.
pub fn inflation_bound_deadband(params: &ConsumerParams, mech: &MechanismParams) -> Result<f64> {
    if mech.penalty.is_none() {
        return Err(Error::Contract("deadband bound needs a finite penalty".into()));
    }
    let (lo, hi) = params.theta_dist.support();
    let mean = params.theta_dist.mean();
    let spread = (params.d * (hi - mean)).max(params.d * (mean - lo));
    if spread > mech.penalty.epsilon {
        return Err(Error::Contract(format!(
            "deadband epsilon = {} does not cover the baseline spread {}; the bound is not guaranteed",
            mech.penalty.epsilon, spread
        )));
    }
    Ok((params.d + mech.penalty.lambda) * mech.stationarity_target() + mech.penalty.epsilon)
}

/// Compares enrolling (reporting `f`) with staying outside the program.
pub fn check_individual_rationality(
    params: &ConsumerParams,
    mech: &MechanismParams,
    f: f64,
    plan: &ThetaSamplePlan,
) -> Result<RationalityCheck> {
    let grid = theta_nodes(&params.theta_dist, plan)?;
    let participant_cost = expected_cost_on(params, mech, f, &grid)?;
    let outside_cost = grid.try_expect(|t| outside_cost_at(params, mech.pi0, t))?;
    Ok(RationalityCheck { rational: participant_cost <= outside_cost, participant_cost, outside_cost })
}

/// Expected reward per unit of expected reduction when reporting `f`:
/// `pi2 (f - E q_c) / (E q_a - E q_c)`.
pub fn excess_payment_rate(
    params: &ConsumerParams,
    mech: &MechanismParams,
    f: f64,
    plan: &ThetaSamplePlan,
) -> Result<f64> {
    let grid = theta_nodes(&params.theta_dist, plan)?;
    let mean_qa = grid.try_expect(|t| consumption_nonparticipant(params, mech.pi0, t))?;
    let mean_qc = grid.try_expect(|t| consumption_called(params, mech.pi0, mech.pi2, t))?;
    let reduction = mean_qa - mean_qc;
    if reduction <= f64::EPSILON * mean_qa.abs().max(1.0) {
        return Err(Error::Domain(
            "expected reduction is zero; the per-unit reward rate is undefined".into(),
        ));
    }
    Ok(mech.pi2 * (f - mean_qc) / reduction)
}
