//! Synthetic two-population scenarios with known ground truth.
//!
//! A scenario fixes the source covariate law, the true source CMR, per-arm
//! outcome noise, and a target population constructed by applying
//! worst-case-style transports with per-point budget at most `delta_true`
//! to the source conditionals. Membership of the target in the radius-
//! `delta_true` ambiguity set therefore holds by construction, which is
//! what the guarantee experiments rely on.
//!
//! Two covariate laws are supported: finite cells (everything exact) and a
//! one-dimensional uniform interval with affine CMR (welfare integrals are
//! piecewise linear and evaluated in closed form).

pub mod regret;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{OutcomeSpace, SourceDataset, TargetCovariates};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::policy::TreePolicy;
use crate::robust::robust_score;

pub use regret::{equivalence_check, regret_experiment, EquivalenceReport, RegretConfig, RegretRow};

/// Deterministic seed derivation for replications: splitmix64 finalizer
/// over the master seed and two stream tags.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Conditional outcome noise around the true CMR, one law per arm. Means
/// must stay exact, so each law is mean-preserving and must fit inside the
/// outcome space (Gaussian noise therefore requires the whole line).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseLaw {
    PointMass,
    Uniform { half_width: f64 },
    Gaussian { sd: f64 },
}

impl NoiseLaw {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseLaw::PointMass => 0.0,
            NoiseLaw::Uniform { half_width } => rng.random_range(-half_width..=*half_width),
            NoiseLaw::Gaussian { sd } => {
                // Box-Muller; two uniforms per draw keeps it stateless.
                let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }
        }
    }
}

#[derive(Debug, Clone)]
enum ScenarioKind {
    Cells {
        /// `c x k` covariate point per cell.
        points: Mat,
        source_weights: Vec<f64>,
        target_weights: Vec<f64>,
        /// `c x d` true source CMR.
        cmr: Mat,
        /// `c x d` non-negative mean shifts defining the target CMR.
        shifts: Mat,
    },
    Line {
        source_range: (f64, f64),
        target_range: (f64, f64),
        /// `m_S(x, a) = intercepts[a-1] + slopes[a-1] * x`.
        intercepts: Vec<f64>,
        slopes: Vec<f64>,
        /// Per-arm constant mean shifts defining the target CMR.
        shifts: Vec<f64>,
    },
}

/// A fully specified two-population experiment.
#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub name: String,
    kind: ScenarioKind,
    noise: Vec<NoiseLaw>,
    pub delta_true: f64,
    pub outcome_space: OutcomeSpace,
    /// Restricted policy class; `None` means canonical trees.
    pub policy_class: Option<Vec<TreePolicy>>,
}

impl SyntheticScenario {
    /// Finite-cell scenario. `points` is `c x k`, `cmr` and `shifts` are
    /// `c x d`.
    #[allow(clippy::too_many_arguments)]
    pub fn cells(
        name: &str,
        points: Mat,
        source_weights: Vec<f64>,
        target_weights: Vec<f64>,
        cmr: Mat,
        shifts: Mat,
        noise: Vec<NoiseLaw>,
        delta_true: f64,
        outcome_space: OutcomeSpace,
        policy_class: Option<Vec<TreePolicy>>,
    ) -> Result<Self> {
        let c = points.rows();
        if c == 0 {
            return Err(Error::Domain("scenario needs at least one cell".into()));
        }
        validate_weights(&source_weights, c, "source")?;
        validate_weights(&target_weights, c, "target")?;
        for i in 0..c {
            if target_weights[i] > 0.0 && source_weights[i] <= 0.0 {
                return Err(Error::Domain(format!(
                    "cell {i} has target mass but zero source mass"
                )));
            }
        }
        if cmr.rows() != c || shifts.rows() != c || cmr.cols() != shifts.cols() {
            return Err(Error::Dimension("cmr/shift tables must be cells x arms".into()));
        }
        let scenario = SyntheticScenario {
            name: name.into(),
            kind: ScenarioKind::Cells { points, source_weights, target_weights, cmr, shifts },
            noise,
            delta_true,
            outcome_space,
            policy_class,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// One-dimensional scenario: uniform covariates, affine CMR per arm.
    #[allow(clippy::too_many_arguments)]
    pub fn line(
        name: &str,
        source_range: (f64, f64),
        target_range: (f64, f64),
        intercepts: Vec<f64>,
        slopes: Vec<f64>,
        shifts: Vec<f64>,
        noise: Vec<NoiseLaw>,
        delta_true: f64,
        outcome_space: OutcomeSpace,
    ) -> Result<Self> {
        if !(source_range.0 < source_range.1) || !(target_range.0 < target_range.1) {
            return Err(Error::Domain("covariate ranges must be non-degenerate".into()));
        }
        if target_range.0 < source_range.0 || target_range.1 > source_range.1 {
            return Err(Error::Domain(
                "target covariate range must lie inside the source range".into(),
            ));
        }
        if intercepts.len() != slopes.len() || intercepts.len() != shifts.len() {
            return Err(Error::Dimension("per-arm parameter lengths differ".into()));
        }
        let scenario = SyntheticScenario {
            name: name.into(),
            kind: ScenarioKind::Line { source_range, target_range, intercepts, slopes, shifts },
            noise,
            delta_true,
            outcome_space,
            policy_class: None,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<()> {
        let d = self.d();
        if d < 2 {
            return Err(Error::Domain("scenario needs at least two arms".into()));
        }
        if self.noise.len() != d {
            return Err(Error::Dimension("need one noise law per arm".into()));
        }
        if !(self.delta_true >= 0.0) {
            return Err(Error::Domain("delta_true must be >= 0".into()));
        }
        // Shifts: non-negative, summing to at most the W1 budget pointwise.
        let max_shift_sum = match &self.kind {
            ScenarioKind::Cells { shifts, .. } => {
                let mut worst = 0.0f64;
                for i in 0..shifts.rows() {
                    let mut row_sum = 0.0;
                    for a in 0..shifts.cols() {
                        let s = shifts.get(i, a);
                        if s < 0.0 {
                            return Err(Error::Domain("shifts must be non-negative".into()));
                        }
                        row_sum += s;
                    }
                    worst = worst.max(row_sum);
                }
                worst
            }
            ScenarioKind::Line { shifts, .. } => {
                if shifts.iter().any(|&s| s < 0.0) {
                    return Err(Error::Domain("shifts must be non-negative".into()));
                }
                shifts.iter().sum()
            }
        };
        if max_shift_sum > self.delta_true + 1e-12 {
            return Err(Error::Domain(format!(
                "per-point shift total {max_shift_sum} exceeds delta_true {}",
                self.delta_true
            )));
        }
        // Noise must keep outcomes inside the space at every (x, a).
        for a in 1..=d {
            let (lo_m, hi_m) = self.cmr_range(a);
            match self.noise[a - 1] {
                NoiseLaw::PointMass => {}
                NoiseLaw::Uniform { half_width } => {
                    if half_width < 0.0 {
                        return Err(Error::Domain("noise half width must be >= 0".into()));
                    }
                    if lo_m - half_width < self.outcome_space.lower
                        || hi_m + half_width > self.outcome_space.upper
                    {
                        return Err(Error::Domain(format!(
                            "uniform noise for arm {a} escapes the outcome space"
                        )));
                    }
                }
                NoiseLaw::Gaussian { sd } => {
                    if sd < 0.0 {
                        return Err(Error::Domain("noise sd must be >= 0".into()));
                    }
                    if self.outcome_space.lower.is_finite()
                        || self.outcome_space.upper.is_finite()
                    {
                        return Err(Error::Domain(
                            "gaussian noise needs an unbounded outcome space \
                             (clipping would bias the conditional means)"
                                .into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Extremes of the source CMR for arm `a` over the source support.
    fn cmr_range(&self, a: usize) -> (f64, f64) {
        match &self.kind {
            ScenarioKind::Cells { cmr, .. } => {
                let vals: Vec<f64> = (0..cmr.rows()).map(|i| cmr.get(i, a - 1)).collect();
                (
                    vals.iter().cloned().fold(f64::INFINITY, f64::min),
                    vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                )
            }
            ScenarioKind::Line { source_range, intercepts, slopes, .. } => {
                let v0 = intercepts[a - 1] + slopes[a - 1] * source_range.0;
                let v1 = intercepts[a - 1] + slopes[a - 1] * source_range.1;
                (v0.min(v1), v0.max(v1))
            }
        }
    }

    pub fn d(&self) -> usize {
        match &self.kind {
            ScenarioKind::Cells { cmr, .. } => cmr.cols(),
            ScenarioKind::Line { intercepts, .. } => intercepts.len(),
        }
    }

    pub fn k(&self) -> usize {
        match &self.kind {
            ScenarioKind::Cells { points, .. } => points.cols(),
            ScenarioKind::Line { .. } => 1,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, ScenarioKind::Cells { .. })
    }

    /// Covariate points of the discrete cells, if any.
    pub fn cell_points(&self) -> Option<&Mat> {
        match &self.kind {
            ScenarioKind::Cells { points, .. } => Some(points),
            ScenarioKind::Line { .. } => None,
        }
    }

    pub fn target_cell_weights(&self) -> Option<&[f64]> {
        match &self.kind {
            ScenarioKind::Cells { target_weights, .. } => Some(target_weights),
            ScenarioKind::Line { .. } => None,
        }
    }

    /// True source CMR `m_S(x, a)`.
    pub fn true_cmr(&self, x: &[f64], a: usize) -> f64 {
        match &self.kind {
            ScenarioKind::Cells { points, cmr, .. } => {
                cmr.get(self.nearest_cell(points, x), a - 1)
            }
            ScenarioKind::Line { intercepts, slopes, .. } => {
                intercepts[a - 1] + slopes[a - 1] * x[0]
            }
        }
    }

    /// True target CMR `m_T(x, a) = max{m_S(x, a) - shift, inf Y}`, the mean
    /// of the transported conditional.
    pub fn target_cmr(&self, x: &[f64], a: usize) -> f64 {
        let shift = match &self.kind {
            ScenarioKind::Cells { points, shifts, .. } => {
                shifts.get(self.nearest_cell(points, x), a - 1)
            }
            ScenarioKind::Line { shifts, .. } => shifts[a - 1],
        };
        (self.true_cmr(x, a) - shift).max(self.outcome_space.lower)
    }

    fn nearest_cell(&self, points: &Mat, x: &[f64]) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for i in 0..points.rows() {
            let d: f64 =
                points.row(i).iter().zip(x).map(|(p, q)| (p - q) * (p - q)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Draw `(Y_i, A_i, X_i)` with uniform random assignment over the arms.
    pub fn sample_source(&self, n_s: usize, seed: u64) -> Result<SourceDataset> {
        let d = self.d();
        if n_s < d {
            return Err(Error::Domain(format!("need at least d = {d} source draws")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut outcomes = Vec::with_capacity(n_s);
        let mut treatments = Vec::with_capacity(n_s);
        let mut rows = Vec::with_capacity(n_s);
        for _ in 0..n_s {
            let x = self.draw_covariate(&mut rng, true);
            let a = rng.random_range(1..=d);
            let y = self.true_cmr(&x, a) + self.noise[a - 1].draw(&mut rng);
            outcomes.push(y);
            treatments.push(a);
            rows.push(x);
        }
        // Uniform assignment can still miss an arm in tiny samples; force
        // coverage deterministically by reassigning the first rows.
        let mut counts = vec![0usize; d];
        for &a in &treatments {
            counts[a - 1] += 1;
        }
        for a in 1..=d {
            if counts[a - 1] == 0 {
                let donor = (0..n_s)
                    .find(|&i| counts[treatments[i] - 1] > 1)
                    .ok_or_else(|| Error::Internal("cannot cover all arms".into()))?;
                counts[treatments[donor] - 1] -= 1;
                treatments[donor] = a;
                counts[a - 1] += 1;
                outcomes[donor] =
                    self.true_cmr(&rows[donor], a) + self.noise[a - 1].draw(&mut rng);
            }
        }
        SourceDataset::from_indexed(outcomes, treatments, Mat::from_rows(&rows)?)
    }

    /// Draw target covariates from the target law.
    pub fn sample_target(&self, n_t: usize, seed: u64) -> Result<TargetCovariates> {
        if n_t == 0 {
            return Err(Error::Domain("need at least one target draw".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> =
            (0..n_t).map(|_| self.draw_covariate(&mut rng, false)).collect();
        TargetCovariates::new(Mat::from_rows(&rows)?)
    }

    fn draw_covariate(&self, rng: &mut ChaCha8Rng, source: bool) -> Vec<f64> {
        match &self.kind {
            ScenarioKind::Cells { points, source_weights, target_weights, .. } => {
                let weights = if source { source_weights } else { target_weights };
                let u: f64 = rng.random_range(0.0..1.0);
                let mut acc = 0.0;
                let mut cell = points.rows() - 1;
                for (i, &w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        cell = i;
                        break;
                    }
                }
                points.row(cell).to_vec()
            }
            ScenarioKind::Line { source_range, target_range, .. } => {
                let (lo, hi) = if source { *source_range } else { *target_range };
                vec![rng.random_range(lo..hi)]
            }
        }
    }

    /// Exact worst-case welfare of `g` over the radius-`delta` ambiguity
    /// set, computed from the true source CMR and the true target covariate
    /// law (sum over cells, or closed-form piecewise-linear integrals on
    /// the line).
    pub fn true_robust_welfare(&self, g: &TreePolicy, delta: f64) -> Result<f64> {
        self.expected_score(
            g,
            |x, a| robust_score(self.true_cmr(x, a), delta, &self.outcome_space),
            |_| vec![delta],
        )
    }

    /// Realized target-population welfare of `g` (expectation of the true
    /// target CMR under the target covariate law).
    pub fn true_target_welfare(&self, g: &TreePolicy) -> Result<f64> {
        self.expected_score(g, |x, a| self.target_cmr(x, a), |a| vec![self.arm_shift(a)])
    }

    fn arm_shift(&self, a: usize) -> f64 {
        match &self.kind {
            ScenarioKind::Cells { .. } => 0.0,
            ScenarioKind::Line { shifts, .. } => shifts[a - 1],
        }
    }

    /// Expected per-sample score under the target covariate law. On the
    /// line the integrand for arm `a` is `max{affine(x) - c, floor}` for
    /// offsets `c` in `offsets(a)`, so exact trapezoid integration only
    /// needs the kink roots of those affine pieces as breakpoints.
    fn expected_score(
        &self,
        g: &TreePolicy,
        score: impl Fn(&[f64], usize) -> f64,
        offsets: impl Fn(usize) -> Vec<f64>,
    ) -> Result<f64> {
        match &self.kind {
            ScenarioKind::Cells { points, target_weights, .. } => {
                let mut total = 0.0;
                for i in 0..points.rows() {
                    let x = points.row(i);
                    let a = g.predict(x)?;
                    total += target_weights[i] * score(x, a);
                }
                Ok(total)
            }
            ScenarioKind::Line { target_range, .. } => {
                let (lo, hi) = *target_range;
                let mut cuts = vec![lo, hi];
                collect_thresholds(g.root(), &mut cuts);
                cuts.retain(|&t| (lo..=hi).contains(&t));
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let mut total = 0.0;
                for w in cuts.windows(2) {
                    let (a_end, b_end) = (w[0], w[1]);
                    if b_end - a_end <= 0.0 {
                        continue;
                    }
                    let mid = 0.5 * (a_end + b_end);
                    let arm = g.predict(&[mid])?;
                    total += integrate_piecewise(
                        |x| score(&[x], arm),
                        a_end,
                        b_end,
                        self.kink_points(arm, &offsets(arm), a_end, b_end),
                    );
                }
                Ok(total / (hi - lo))
            }
        }
    }

    /// Roots of `intercept - c + slope * x = floor` inside `(lo, hi)` for
    /// each offset `c`: the only places `max{affine - c, floor}` can kink.
    fn kink_points(&self, a: usize, offsets: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        match &self.kind {
            ScenarioKind::Cells { .. } => vec![],
            ScenarioKind::Line { intercepts, slopes, .. } => {
                let mut kinks = Vec::new();
                if self.outcome_space.lower.is_finite() && slopes[a - 1].abs() > 0.0 {
                    for &c in offsets {
                        let root =
                            (self.outcome_space.lower + c - intercepts[a - 1]) / slopes[a - 1];
                        if root > lo && root < hi {
                            kinks.push(root);
                        }
                    }
                }
                kinks
            }
        }
    }
}

fn collect_thresholds(node: &crate::policy::TreeNode, out: &mut Vec<f64>) {
    if let crate::policy::TreeNode::Split { threshold, left, right, .. } = node {
        out.push(*threshold);
        collect_thresholds(left, out);
        collect_thresholds(right, out);
    }
}

/// Exact integral of a piecewise-linear function given its interior kink
/// locations: trapezoid rule between consecutive breakpoints.
fn integrate_piecewise(f: impl Fn(f64) -> f64, lo: f64, hi: f64, mut kinks: Vec<f64>) -> f64 {
    kinks.retain(|&x| x > lo && x < hi);
    kinks.push(lo);
    kinks.push(hi);
    kinks.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in kinks.windows(2) {
        total += 0.5 * (f(w[0]) + f(w[1])) * (w[1] - w[0]);
    }
    total
}

fn validate_weights(weights: &[f64], expect: usize, what: &str) -> Result<()> {
    if weights.len() != expect {
        return Err(Error::Dimension(format!("{what} weights must have one entry per cell")));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::Domain(format!("{what} weights must be non-negative")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("{what} weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// The two-cell counterexample where the plug-in and robust rules disagree:
/// outcomes live in `[0, inf)`, the policy class holds exactly the two
/// "treat one cell" rules, and the target puts mass `q` on the low-outcome
/// cell. Cell `m` is encoded as `x = 0`, cell `f` as `x = 1`; arm 1 is the
/// paper-side treatment `1`, arm 2 its control `0`.
pub fn example1_scenario(q: f64) -> Result<SyntheticScenario> {
    if !(q > 0.5 && q < 1.0) {
        return Err(Error::Domain(format!("q must lie in (0.5, 1), got {q}")));
    }
    let g1 = TreePolicy::split(1, 0.5, TreePolicy::leaf(1), TreePolicy::leaf(2));
    let g2 = TreePolicy::split(1, 0.5, TreePolicy::leaf(2), TreePolicy::leaf(1));
    SyntheticScenario::cells(
        "example1",
        Mat::from_rows(&[vec![0.0], vec![1.0]])?,
        vec![0.5, 0.5],
        vec![q, 1.0 - q],
        Mat::from_rows(&[vec![0.5, 0.4], vec![1.5, 1.4]])?,
        Mat::zeros(2, 2),
        vec![NoiseLaw::PointMass, NoiseLaw::PointMass],
        0.0,
        OutcomeSpace::nonnegative(),
        Some(vec![g1, g2]),
    )
}

/// The canonical ambiguity radius used in the two-cell counterexample.
pub const EXAMPLE1_DELTA: f64 = 1.0;

/// Shipped "two-state" scenario: three strata on a line, a program arm
/// that looks best everywhere in the source state, and a target state
/// where the program underperforms in the strata that carry most target
/// mass. Depth-1 threshold rules cannot express the pointwise-best rule,
/// so the plug-in and robust searches genuinely diverge as `delta` grows.
pub fn two_state_scenario() -> SyntheticScenario {
    let w = 1.0 / 3.0;
    SyntheticScenario::cells(
        "two-state",
        Mat::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap(),
        vec![w, w, w],
        vec![0.4, 0.3, 0.3],
        Mat::from_rows(&[vec![1.0, 0.1], vec![2.6, 3.0], vec![1.3, 0.2]]).unwrap(),
        Mat::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap(),
        vec![NoiseLaw::Uniform { half_width: 0.1 }, NoiseLaw::Uniform { half_width: 0.1 }],
        1.0,
        OutcomeSpace::nonnegative(),
        None,
    )
    .expect("two-state scenario is statically valid")
}

/// Continuous scenario for rate experiments: uniform covariates on `[0, 1]`
/// and affine CMRs crossing mid-interval, so the optimal depth-1 threshold
/// is interior and sampling noise moves it.
pub fn rate_scenario() -> SyntheticScenario {
    SyntheticScenario::line(
        "rate-check",
        (0.0, 1.0),
        (0.0, 1.0),
        vec![1.0, 2.0],
        vec![1.0, -1.0],
        vec![0.25, 0.0],
        vec![NoiseLaw::Uniform { half_width: 0.5 }, NoiseLaw::Uniform { half_width: 0.5 }],
        0.25,
        OutcomeSpace::nonnegative(),
    )
    .expect("rate scenario is statically valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::wasserstein1_1d;

    #[test]
    fn example1_values_match_hand_substitution() {
        let s = example1_scenario(0.75).unwrap();
        let class = s.policy_class.clone().unwrap();
        let (g1, g2) = (&class[0], &class[1]);
        assert!((s.true_robust_welfare(g1, 0.0).unwrap() - 0.725).abs() < 1e-12);
        assert!((s.true_robust_welfare(g2, 0.0).unwrap() - 0.675).abs() < 1e-12);
        assert!((s.true_robust_welfare(g1, EXAMPLE1_DELTA).unwrap() - 0.1).abs() < 1e-12);
        assert!((s.true_robust_welfare(g2, EXAMPLE1_DELTA).unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn example1_naive_gap_vanishes_toward_half() {
        let s = example1_scenario(0.5001).unwrap();
        let class = s.policy_class.clone().unwrap();
        let gap = s.true_robust_welfare(&class[0], 0.0).unwrap()
            - s.true_robust_welfare(&class[1], 0.0).unwrap();
        // gap = 0.2 q - 0.1 evaluated at q = 0.5001.
        assert!(gap > 0.0 && (gap - 2e-5).abs() < 1e-12);
    }

    #[test]
    fn example1_robust_ranking_is_q_free() {
        for i in 0..9 {
            let q = 0.55 + 0.05 * i as f64;
            let s = example1_scenario(q).unwrap();
            let class = s.policy_class.clone().unwrap();
            let v1 = s.true_robust_welfare(&class[0], EXAMPLE1_DELTA).unwrap();
            let v2 = s.true_robust_welfare(&class[1], EXAMPLE1_DELTA).unwrap();
            assert!(v2 > v1, "q = {q}");
        }
    }

    #[test]
    fn example1_rejects_bad_q() {
        assert!(example1_scenario(0.5).is_err());
        assert!(example1_scenario(1.0).is_err());
    }

    #[test]
    fn point_mass_source_outcomes_are_exact() {
        let s = example1_scenario(0.6).unwrap();
        let ds = s.sample_source(50, 7).unwrap();
        for i in 0..ds.n() {
            let want = s.true_cmr(ds.covariates().row(i), ds.treatments()[i]);
            assert_eq!(ds.outcomes()[i], want);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let s = two_state_scenario();
        assert_eq!(s.sample_source(200, 3).unwrap(), s.sample_source(200, 3).unwrap());
        assert_eq!(s.sample_target(70, 9).unwrap(), s.sample_target(70, 9).unwrap());
        assert_ne!(s.sample_source(200, 3).unwrap(), s.sample_source(200, 4).unwrap());
        assert_eq!(s.sample_target(1, 5).unwrap().n(), 1);
    }

    #[test]
    fn source_arm_means_within_clt_band() {
        let s = two_state_scenario();
        let ds = s.sample_source(10_000, 123).unwrap();
        // Uniform noise sd, within-cell:
        let sd = 0.1 / (3.0f64).sqrt();
        for a in 1..=2 {
            for cell in 0..3 {
                let x = cell as f64;
                let members: Vec<f64> = (0..ds.n())
                    .filter(|&i| {
                        ds.treatments()[i] == a && ds.covariates().get(i, 0) == x
                    })
                    .map(|i| ds.outcomes()[i])
                    .collect();
                let mean: f64 = members.iter().sum::<f64>() / members.len() as f64;
                let want = s.true_cmr(&[x], a);
                let band = 3.0 * sd / (members.len() as f64).sqrt();
                assert!(
                    (mean - want).abs() <= band,
                    "arm {a} cell {cell}: {mean} vs {want} +- {band}"
                );
            }
        }
    }

    #[test]
    fn target_cell_frequencies_within_clt_band() {
        let s = example1_scenario(0.75).unwrap();
        let tc = s.sample_target(20_000, 11).unwrap();
        let share = (0..tc.n()).filter(|&j| tc.row(j)[0] == 0.0).count() as f64
            / tc.n() as f64;
        let band = 3.0 * (0.75f64 * 0.25 / 20_000.0).sqrt();
        assert!((share - 0.75).abs() <= band);
    }

    #[test]
    fn target_conditionals_respect_w1_budget() {
        // Reconstruct each cell's source and target conditional per arm and
        // check the 1-D transport cost against the declared budget.
        let s = two_state_scenario();
        for cell in 0..3 {
            let x = [cell as f64];
            let mut total = 0.0;
            for a in 1..=2 {
                let src = s.true_cmr(&x, a);
                let dst = s.target_cmr(&x, a);
                total += wasserstein1_1d(&[src], &[1.0], &[dst], &[1.0]).unwrap();
            }
            assert!(total <= s.delta_true + 1e-12, "cell {cell}: cost {total}");
        }
    }

    #[test]
    fn corollary1_pointwise_gap_within_budget() {
        let s = two_state_scenario();
        for cell in 0..3 {
            for a in 1..=2 {
                let x = [cell as f64];
                assert!((s.target_cmr(&x, a) - s.true_cmr(&x, a)).abs() <= s.delta_true + 1e-12);
            }
        }
    }

    #[test]
    fn line_true_welfare_matches_monte_carlo() {
        let s = rate_scenario();
        let g = TreePolicy::split(1, 0.4, TreePolicy::leaf(2), TreePolicy::leaf(1));
        for delta in [0.0, 0.25, 1.3] {
            let exact = s.true_robust_welfare(&g, delta).unwrap();
            // Empirical counterpart on a large seeded sample.
            let tc = s.sample_target(100_000, 2024).unwrap();
            let pred_rows: Vec<Vec<f64>> = (0..tc.n())
                .map(|j| (1..=2).map(|a| s.true_cmr(tc.row(j), a)).collect())
                .collect();
            let gamma = crate::robust::RobustScoreMatrix::from_predictions(
                &Mat::from_rows(&pred_rows).unwrap(),
                delta,
                s.outcome_space,
            )
            .unwrap();
            let emp = crate::robust::empirical_robust_welfare(&g, &gamma, &tc).unwrap();
            // Scores are bounded by ~2.25, so 3 standard errors is ~2e-2.
            let se = 3.0 * 2.25 / (tc.n() as f64).sqrt();
            assert!((exact - emp).abs() <= se, "delta {delta}: {exact} vs {emp}");
        }
    }

    #[test]
    fn two_state_policy_switch_at_derived_radius() {
        // The always-treat rule wins the plug-in objective; the robust
        // objective flips to the treat-last-stratum split at delta = 0.7.
        let s = two_state_scenario();
        let treat_all = TreePolicy::leaf(1);
        let control_low = TreePolicy::split(1, 1.5, TreePolicy::leaf(2), TreePolicy::leaf(1));
        let naive_gap = s.true_robust_welfare(&treat_all, 0.0).unwrap()
            - s.true_robust_welfare(&control_low, 0.0).unwrap();
        assert!(naive_gap > 0.0);
        let pre = s.true_robust_welfare(&treat_all, 0.69).unwrap()
            - s.true_robust_welfare(&control_low, 0.69).unwrap();
        let post = s.true_robust_welfare(&treat_all, 0.71).unwrap()
            - s.true_robust_welfare(&control_low, 0.71).unwrap();
        assert!(pre > 0.0 && post < 0.0, "pre {pre}, post {post}");
        // And the realized target welfare prefers the robust choice.
        assert!(
            s.true_target_welfare(&control_low).unwrap()
                > s.true_target_welfare(&treat_all).unwrap()
        );
    }

    #[test]
    fn derive_seed_is_stable_and_spreads() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
    }
}
