//! Worst-case welfare under Wasserstein-1 and KL ambiguity.
//!
//! The Wasserstein-1 worst case over conditionals within radius `delta` of
//! the source has the closed form `max{m(x, a) - delta, inf Y}`; everything
//! in [`score_matrix`] and [`empirical_robust_welfare`] is built on it. The
//! submodules provide the KL-divergence duals ([`kl`]), the explicit
//! worst-case transport maps ([`transport`]), an independent LP primal
//! oracle that verifies the closed form on discrete supports ([`oracle`]),
//! and necessary-condition diagnostics for ambiguity-set membership
//! ([`bounds`]).

pub mod bounds;
pub mod kl;
pub mod oracle;
pub mod transport;

use serde::{Deserialize, Serialize};

use crate::cmr::CmrModel;
use crate::data::{OutcomeSpace, TargetCovariates};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::policy::TreePolicy;

pub use bounds::{ambiguity_bounds, AmbiguityBoundsReport, BoundItem};
pub use kl::{
    covariate_shift_worst_case, gaussian_kl_score_matrix, gaussian_kl_worst_case,
    kl_dual_objective, kl_score_matrix, kl_worst_case_mean, DualSolveResult,
};
pub use oracle::{default_transport_grid, primal_lp_worst_case};
pub use transport::{wasserstein1_1d, worst_case_transport};

/// Which ambiguity set the scores are computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmbiguityKind {
    /// Wasserstein-1 ball around each source conditional.
    #[serde(rename = "w1")]
    Wasserstein1,
    /// KL ball around each (empirical) source conditional.
    #[serde(rename = "kl")]
    KlConditional,
    /// KL ball around a Gaussian source conditional (closed form).
    #[serde(rename = "gauss-kl")]
    GaussianKl,
}

/// Ambiguity-set parameters: conditional radius `delta` (outcome units for
/// Wasserstein-1, nats for KL), optional covariate-shift KL radius `rho`,
/// optional Hurwicz pessimism weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    pub kind: AmbiguityKind,
    pub delta: f64,
    pub rho: Option<f64>,
    pub hurwicz_alpha: Option<f64>,
}

impl AmbiguitySpec {
    pub fn wasserstein1(delta: f64) -> Result<Self> {
        Self::new(AmbiguityKind::Wasserstein1, delta, None, None)
    }

    pub fn new(
        kind: AmbiguityKind,
        delta: f64,
        rho: Option<f64>,
        hurwicz_alpha: Option<f64>,
    ) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!("ambiguity radius must be >= 0, got {delta}")));
        }
        if let Some(r) = rho {
            if !(r >= 0.0) {
                return Err(Error::Domain(format!("covariate radius must be >= 0, got {r}")));
            }
        }
        if let Some(a) = hurwicz_alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Domain(format!("hurwicz alpha must be in [0, 1], got {a}")));
            }
        }
        Ok(AmbiguitySpec { kind, delta, rho, hurwicz_alpha })
    }
}

/// Worst-case conditional welfare of assigning an arm with source CMR
/// `m_hat` under a Wasserstein-1 ball of radius `delta`.
pub fn robust_score(m_hat: f64, delta: f64, ys: &OutcomeSpace) -> f64 {
    (m_hat - delta).max(ys.lower)
}

/// Best-case counterpart, mirrored against the upper end of the space.
pub fn best_case_score(m_hat: f64, delta: f64, ys: &OutcomeSpace) -> f64 {
    (m_hat + delta).min(ys.upper)
}

/// Hurwicz blend `alpha * worst + (1 - alpha) * best`.
pub fn hurwicz_score(m_hat: f64, delta: f64, alpha: f64, ys: &OutcomeSpace) -> f64 {
    alpha * robust_score(m_hat, delta, ys) + (1.0 - alpha) * best_case_score(m_hat, delta, ys)
}

/// Per-target-sample, per-action worst-case scores
/// `scores[j][a-1] = max{m_hat(X_j, a) - delta, inf Y}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustScoreMatrix {
    scores: Mat,
    delta: f64,
    outcome_space: OutcomeSpace,
}

impl RobustScoreMatrix {
    pub fn from_predictions(pred: &Mat, delta: f64, ys: OutcomeSpace) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!("delta must be >= 0, got {delta}")));
        }
        let scores = pred.map(|m| robust_score(m, delta, &ys));
        Ok(RobustScoreMatrix { scores, delta, outcome_space: ys })
    }

    /// Wrap raw per-sample per-action scores (already worst-case adjusted).
    pub fn from_scores(scores: Mat, delta: f64, ys: OutcomeSpace) -> Self {
        RobustScoreMatrix { scores, delta, outcome_space: ys }
    }

    pub fn n(&self) -> usize {
        self.scores.rows()
    }

    pub fn d(&self) -> usize {
        self.scores.cols()
    }

    /// Score of assigning arm `a` (1-based) to target sample `j`.
    pub fn get(&self, j: usize, a: usize) -> f64 {
        self.scores.get(j, a - 1)
    }

    pub fn scores(&self) -> &Mat {
        &self.scores
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn outcome_space(&self) -> &OutcomeSpace {
        &self.outcome_space
    }
}

/// Robust score matrix for a fitted CMR model on target covariates
/// (Wasserstein-1 ambiguity only; the KL kinds need distributional
/// information beyond the CMR, see [`kl`]).
pub fn score_matrix(
    model: &CmrModel,
    tc: &TargetCovariates,
    spec: &AmbiguitySpec,
    ys: OutcomeSpace,
) -> Result<RobustScoreMatrix> {
    if spec.kind != AmbiguityKind::Wasserstein1 {
        return Err(Error::Config(
            "score_matrix expects the Wasserstein-1 ambiguity kind".into(),
        ));
    }
    let pred = model.predict_matrix(tc)?;
    RobustScoreMatrix::from_predictions(&pred, spec.delta, ys)
}

/// Empirical distributionally robust welfare
/// `(1/n_t) sum_j scores[j][g(X_j)]`.
pub fn empirical_robust_welfare(
    g: &TreePolicy,
    gamma: &RobustScoreMatrix,
    tc: &TargetCovariates,
) -> Result<f64> {
    if gamma.n() != tc.n() {
        return Err(Error::Dimension("score matrix and target sample sizes differ".into()));
    }
    let mut total = 0.0;
    for j in 0..tc.n() {
        let a = g.predict(tc.row(j))?;
        if a == 0 || a > gamma.d() {
            return Err(Error::Domain(format!("policy action {a} outside 1..={}", gamma.d())));
        }
        total += gamma.get(j, a);
    }
    Ok(total / tc.n() as f64)
}

/// Finite-support joint distribution of the potential-outcome vector at one
/// covariate cell: `atoms` is `n x d`, one row per support point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteConditional {
    atoms: Mat,
    weights: Vec<f64>,
}

impl DiscreteConditional {
    pub fn new(atoms: Mat, weights: Vec<f64>, ys: &OutcomeSpace) -> Result<Self> {
        if atoms.rows() == 0 {
            return Err(Error::Domain("discrete conditional needs at least one atom".into()));
        }
        if atoms.rows() != weights.len() {
            return Err(Error::Dimension("atom and weight counts differ".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Domain("weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights sum to {total}, expected 1")));
        }
        for r in 0..atoms.rows() {
            for c in 0..atoms.cols() {
                if !ys.contains(atoms.get(r, c)) {
                    return Err(Error::Domain(format!(
                        "atom coordinate {} outside outcome space [{}, {}]",
                        atoms.get(r, c),
                        ys.lower,
                        ys.upper
                    )));
                }
            }
        }
        Ok(DiscreteConditional { atoms, weights })
    }

    pub fn point_mass(point: Vec<f64>, ys: &OutcomeSpace) -> Result<Self> {
        Self::new(Mat::from_rows(&[point])?, vec![1.0], ys)
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.rows()
    }

    /// Dimension of the potential-outcome vector (= number of arms).
    pub fn dim(&self) -> usize {
        self.atoms.cols()
    }

    pub fn atoms(&self) -> &Mat {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mean of coordinate `action` (1-based).
    pub fn coord_mean(&self, action: usize) -> f64 {
        (0..self.n_atoms())
            .map(|i| self.weights[i] * self.atoms.get(i, action - 1))
            .sum()
    }

    /// Values of coordinate `action` (1-based) across atoms.
    pub fn coord_values(&self, action: usize) -> Vec<f64> {
        (0..self.n_atoms()).map(|i| self.atoms.get(i, action - 1)).collect()
    }
}
