//! Expectation over theta: Gauss-Legendre quadrature for bounded continuous
//! distributions and seeded Monte Carlo for validation runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ThetaDist;

/// How to realize the expectation over theta.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMethod {
    MonteCarlo,
    Quadrature,
}

/// A reproducible plan for evaluating expectations over theta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSamplePlan {
    pub method: SampleMethod,
    pub n_points: usize,
    /// Seed for the Monte Carlo stream; ignored by quadrature.
    pub seed: u64,
}

impl ThetaSamplePlan {
    pub fn quadrature(n_points: usize) -> Self {
        Self { method: SampleMethod::Quadrature, n_points, seed: 0 }
    }

    pub fn monte_carlo(n_points: usize, seed: u64) -> Self {
        Self { method: SampleMethod::MonteCarlo, n_points, seed }
    }
}

/// Weighted theta nodes realizing an expectation. Weights are positive and
/// sum to one.
#[derive(Debug, Clone)]
pub struct ThetaGrid {
    nodes: Vec<(f64, f64)>,
}

impl ThetaGrid {
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    /// Weighted expectation of `g` over the grid, accumulated in node order.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        let mut acc = 0.0;
        for &(theta, w) in &self.nodes {
            acc += w * g(theta);
        }
        acc
    }

    /// Fallible variant of [`expect`](Self::expect).
    pub fn try_expect<F: FnMut(f64) -> Result<f64>>(&self, mut g: F) -> Result<f64> {
        let mut acc = 0.0;
        for &(theta, w) in &self.nodes {
            acc += w * g(theta)?;
        }
        Ok(acc)
    }

    /// Weighted mean of the node locations.
    pub fn mean(&self) -> f64 {
        self.expect(|t| t)
    }
}

/// Builds the weighted node set for a distribution under a sample plan.
///
/// Degenerate distributions collapse to a single unit-weight node regardless
/// of the plan. Quadrature uses Gauss-Legendre nodes on the support weighted
/// by the density; Monte Carlo draws `n_points` seeded samples with uniform
/// weight `1/n`.
pub fn theta_nodes(dist: &ThetaDist, plan: &ThetaSamplePlan) -> Result<ThetaGrid> {
    dist.validate()?;
    if let ThetaDist::Degenerate { location } = *dist {
        return Ok(ThetaGrid { nodes: vec![(location, 1.0)] });
    }
    if plan.n_points == 0 {
        return Err(Error::InvalidParameter("sample plan needs n_points > 0".into()));
    }
    let nodes = match plan.method {
        SampleMethod::Quadrature => {
            let (lo, hi) = dist.support();
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            let gl = gauss_legendre(plan.n_points);
            let mut nodes: Vec<(f64, f64)> = gl
                .iter()
                .map(|&(x, w)| {
                    let theta = mid + half * x;
                    (theta, w * half * dist.density(theta))
                })
                .collect();
            let total: f64 = nodes.iter().map(|&(_, w)| w).sum();
            for n in &mut nodes {
                n.1 /= total;
            }
            nodes
        }
        SampleMethod::MonteCarlo => {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            let w = 1.0 / plan.n_points as f64;
            (0..plan.n_points).map(|_| (dist.sample(&mut rng), w)).collect()
        }
    };
    Ok(ThetaGrid { nodes })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence. Weights sum to 2.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n > 0, "quadrature order must be positive");
    let mut out = Vec::with_capacity(n);
    let m = (n + 1) / 2;
    for k in 0..m {
        // Tricomi initial guess for the k-th positive root
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0_f64, x);
            if n == 1 {
                p1 = x;
            }
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((-x, w));
        if !(n % 2 == 1 && k == m - 1) {
            out.push((x, w));
        }
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [1, 2, 3, 8, 16, 33, 64] {
            let gl = gauss_legendre(n);
            assert_eq!(gl.len(), n);
            let s: f64 = gl.iter().map(|&(_, w)| w).sum();
            assert_abs_diff_eq!(s, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // order n is exact through degree 2n - 1
        let gl = gauss_legendre(16);
        let integrate = |f: &dyn Fn(f64) -> f64| gl.iter().map(|&(x, w)| w * f(x)).sum::<f64>();
        assert_abs_diff_eq!(integrate(&|x| x * x), 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(integrate(&|x| x.powi(31)), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(integrate(&|x| x.powi(30)), 2.0 / 31.0, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_distribution_yields_point_mass() {
        let dist = ThetaDist::Degenerate { location: 0.0 };
        for plan in [ThetaSamplePlan::quadrature(16), ThetaSamplePlan::monte_carlo(100, 1)] {
            let grid = theta_nodes(&dist, &plan).unwrap();
            assert_eq!(grid.nodes(), &[(0.0, 1.0)]);
        }
    }

    #[test]
    fn uniform_quadrature_nodes_are_symmetric_and_normalized() {
        let dist = ThetaDist::Uniform { lo: -0.05, hi: 0.05 };
        let grid = theta_nodes(&dist, &ThetaSamplePlan::quadrature(16)).unwrap();
        let total: f64 = grid.nodes().iter().map(|&(_, w)| w).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        for (&(a, wa), &(b, wb)) in grid.nodes().iter().zip(grid.nodes().iter().rev()) {
            assert_abs_diff_eq!(a, -b, epsilon = 1e-14);
            assert_abs_diff_eq!(wa, wb, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(grid.mean(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn monte_carlo_mean_within_standard_error_bound() {
        let dist = ThetaDist::Uniform { lo: -0.05, hi: 0.05 };
        let n = 100_000;
        let grid = theta_nodes(&dist, &ThetaSamplePlan::monte_carlo(n, 42)).unwrap();
        // 3 sigma / sqrt(n) with sigma = 0.05 / sqrt(3)
        let bound = 3.0 * (0.05 / 3.0_f64.sqrt()) / (n as f64).sqrt();
        assert!(grid.mean().abs() < bound, "mean {} exceeds bound {}", grid.mean(), bound);
    }

    #[test]
    fn monte_carlo_is_reproducible_per_seed() {
        let dist = ThetaDist::Uniform { lo: -1.0, hi: 1.0 };
        let a = theta_nodes(&dist, &ThetaSamplePlan::monte_carlo(64, 9)).unwrap();
        let b = theta_nodes(&dist, &ThetaSamplePlan::monte_carlo(64, 9)).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        let c = theta_nodes(&dist, &ThetaSamplePlan::monte_carlo(64, 10)).unwrap();
        assert_ne!(a.nodes(), c.nodes());
    }

    #[test]
    fn zero_points_rejected() {
        let dist = ThetaDist::Uniform { lo: -1.0, hi: 1.0 };
        assert!(theta_nodes(&dist, &ThetaSamplePlan::quadrature(0)).is_err());
    }

    #[test]
    fn truncated_normal_quadrature_reproduces_mean() {
        let dist = ThetaDist::TruncatedNormal { mean: 0.01, std_dev: 0.02, lo: -0.03, hi: 0.05 };
        let grid = theta_nodes(&dist, &ThetaSamplePlan::quadrature(64)).unwrap();
        assert_abs_diff_eq!(grid.mean(), dist.mean(), epsilon = 1e-10);
    }
}
