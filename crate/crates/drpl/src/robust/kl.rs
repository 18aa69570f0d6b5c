//! KL-divergence worst-case means via the one-dimensional concave dual
//!
//! ```text
//! inf { E_Q[Y] : KL(Q || P) <= delta }
//!     = max_{lambda >= 0} { -lambda*delta - lambda*log E_P[exp(-Y/lambda)] }
//! ```
//!
//! The dual is concave in `lambda`, so a golden-section search on
//! `log lambda` finds it; the two boundary limits (essential infimum as
//! `lambda -> 0`, the mean as `lambda -> inf`) are compared explicitly
//! because the supremum can sit on either end.

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Outcome of a 1-D dual solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSolveResult {
    /// Maximizing dual variable; 0 encodes the `lambda -> 0` boundary and
    /// `f64::INFINITY` the analytic `delta = 0` / point-mass limits.
    pub lambda_star: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const LAMBDA_MIN: f64 = 1e-8;
const MAX_ITERS: usize = 200;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Dual objective `-lambda*delta - lambda*log E[exp(-Y/lambda)]`, evaluated
/// with a log-sum-exp shift so large `Y/lambda` ratios cannot overflow.
pub fn kl_dual_objective(values: &[f64], weights: &[f64], delta: f64, lambda: f64) -> f64 {
    let y_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let sum: f64 = values
        .iter()
        .zip(weights)
        .map(|(&y, &w)| w * (-(y - y_min) / lambda).exp())
        .sum();
    -lambda * delta + y_min - lambda * sum.ln()
}

fn validate_weighted(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain("empty atom set".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::Dimension("value and weight counts differ".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("atom values must be finite".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::Domain("weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Worst-case mean of a weighted atom set over the KL ball of radius
/// `delta` around it.
pub fn kl_worst_case_mean(values: &[f64], weights: &[f64], delta: f64) -> Result<DualSolveResult> {
    validate_weighted(values, weights)?;
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("KL radius must be >= 0, got {delta}")));
    }
    let mean: f64 = values.iter().zip(weights).map(|(&y, &w)| w * y).sum();

    // delta = 0: the ball is the singleton {P}.
    if delta == 0.0 {
        return Ok(DualSolveResult {
            lambda_star: f64::INFINITY,
            value: mean,
            iterations: 0,
            converged: true,
        });
    }

    // Point mass (or numerically indistinguishable): every Q << P equals P.
    let y_min = values
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&y, _)| y)
        .fold(f64::INFINITY, f64::min);
    let y_max = values
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&y, _)| y)
        .fold(f64::NEG_INFINITY, f64::max);
    let range = y_max - y_min;
    if range < 1e-15 {
        return Ok(DualSolveResult {
            lambda_star: f64::INFINITY,
            value: mean,
            iterations: 0,
            converged: true,
        });
    }

    let lambda_max = 10.0 * range / delta.max(1e-8);
    let objective = |t: f64| kl_dual_objective(values, weights, delta, t.exp());

    // Golden-section maximization on log lambda.
    let mut lo = LAMBDA_MIN.ln();
    let mut hi = lambda_max.ln();
    let mut iters = 0;
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while iters < MAX_ITERS && (hi - lo) > 1e-12 {
        iters += 1;
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = objective(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = objective(x1);
        }
    }
    let t_star = 0.5 * (lo + hi);
    let interior = (t_star.exp(), objective(t_star));

    // Boundary candidates: lambda -> 0 yields the essential infimum,
    // lambda = lambda_max stands in for the lambda -> inf limit.
    let low_boundary = (0.0, y_min);
    let high_boundary = (lambda_max, kl_dual_objective(values, weights, delta, lambda_max));

    let (lambda_star, value) = [interior, low_boundary, high_boundary]
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Ok(DualSolveResult { lambda_star, value, iterations: iters, converged: iters < MAX_ITERS })
}

/// Closed-form KL worst case for a Gaussian conditional `N(m, sigma^2)`:
/// `m - sqrt(2 delta) * sigma`.
pub fn gaussian_kl_worst_case(m: f64, sigma: f64, delta: f64) -> f64 {
    debug_assert!(sigma >= 0.0 && delta >= 0.0);
    m - (2.0 * delta).sqrt() * sigma
}

/// Worst case of `sum_j w_j * phi_j` over covariate reweightings with
/// `KL(w || base) <= rho`; the same 1-D dual as [`kl_worst_case_mean`]
/// applied to the per-sample worst-case conditional welfares.
pub fn covariate_shift_worst_case(
    phi: &[f64],
    base_weights: &[f64],
    rho: f64,
) -> Result<DualSolveResult> {
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!("covariate KL radius must be >= 0, got {rho}")));
    }
    kl_worst_case_mean(phi, base_weights, rho)
}

/// Per-sample per-action KL worst-case scores built from an empirical
/// residual model: the conditional at `(x, a)` is approximated by the arm-a
/// residuals re-centered at the prediction and clamped to the outcome space.
pub fn kl_score_matrix(
    pred: &Mat,
    residuals_per_arm: &[Vec<f64>],
    delta: f64,
    ys: &crate::data::OutcomeSpace,
) -> Result<Mat> {
    if residuals_per_arm.len() != pred.cols() {
        return Err(Error::Dimension("need one residual set per arm".into()));
    }
    let mut out = Mat::zeros(pred.rows(), pred.cols());
    for a in 0..pred.cols() {
        let residuals = &residuals_per_arm[a];
        if residuals.is_empty() {
            return Err(Error::Domain(format!("arm {} has no residuals", a + 1)));
        }
        let w = vec![1.0 / residuals.len() as f64; residuals.len()];
        for j in 0..pred.rows() {
            let atoms: Vec<f64> = residuals
                .iter()
                .map(|r| (pred.get(j, a) + r).clamp(ys.lower, ys.upper))
                .collect();
            out.set(j, a, kl_worst_case_mean(&atoms, &w, delta)?.value);
        }
    }
    Ok(out)
}

/// Gaussian-KL scores `m_hat - sqrt(2 delta) * sigma_a` with one residual
/// standard deviation per arm.
pub fn gaussian_kl_score_matrix(pred: &Mat, arm_sd: &[f64], delta: f64) -> Result<Mat> {
    if arm_sd.len() != pred.cols() {
        return Err(Error::Dimension("need one residual sd per arm".into()));
    }
    let mut out = Mat::zeros(pred.rows(), pred.cols());
    for a in 0..pred.cols() {
        for j in 0..pred.rows() {
            out.set(j, a, gaussian_kl_worst_case(pred.get(j, a), arm_sd[a], delta));
        }
    }
    Ok(out)
}
