//! Monte Carlo regret experiments and the plug-in/robust equivalence check.
//!
//! Distributionally robust regret of a learned rule is the gap between the
//! best attainable worst-case welfare and the learned rule's worst-case
//! welfare, both evaluated exactly against the scenario's ground truth. The
//! experiment fits rules on simulated draws (optionally injecting the true
//! CMR as an oracle) and reports one row per replication.

use serde::{Deserialize, Serialize};

use crate::cmr::{fit_cmr, CmrConfig};
use crate::data::TargetCovariates;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::policy::{enumerate_canonical_trees, exact_tree_search, TreePolicy};
use crate::robust::{empirical_robust_welfare, RobustScoreMatrix};

use super::{derive_seed, SyntheticScenario};

#[derive(Debug, Clone)]
pub struct RegretConfig {
    /// `(n_s, n_t)` pairs to simulate.
    pub sizes: Vec<(usize, usize)>,
    pub reps: usize,
    pub delta: f64,
    pub depth: usize,
    /// Inject the true CMR instead of fitting one.
    pub oracle_cmr: bool,
    pub cmr: CmrConfig,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegretRow {
    pub n_s: usize,
    pub n_t: usize,
    pub rep: usize,
    pub seed: u64,
    /// `V_dr(true optimum) - V_dr(learned rule)`, both exact.
    pub r_dro: f64,
    /// Realized target welfare of the plug-in rule.
    pub naive_target_welfare: f64,
    /// Realized target welfare of the robust rule.
    pub dr_target_welfare: f64,
}

/// Learn the rule the way the estimator would: restricted-class argmax when
/// the scenario carries a class, exact tree search otherwise.
pub fn fit_rule(
    s: &SyntheticScenario,
    gamma: &RobustScoreMatrix,
    tc: &TargetCovariates,
    depth: usize,
) -> Result<(TreePolicy, f64)> {
    match &s.policy_class {
        Some(class) => {
            let mut best: Option<(TreePolicy, f64)> = None;
            for g in class {
                let v = empirical_robust_welfare(g, gamma, tc)?;
                if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                    best = Some((g.clone(), v));
                }
            }
            best.ok_or_else(|| Error::Domain("empty policy class".into()))
        }
        None => {
            let res = exact_tree_search(gamma, tc, depth, &[])?;
            Ok((res.policy, res.value))
        }
    }
}

/// Exact maximizer of the true robust welfare over the scenario's policy
/// class (restricted class, canonical trees over the cells, or threshold
/// rules on the line).
pub fn true_dr_optimum(
    s: &SyntheticScenario,
    delta: f64,
    depth: usize,
) -> Result<(TreePolicy, f64)> {
    if let Some(class) = &s.policy_class {
        let mut best: Option<(TreePolicy, f64)> = None;
        for g in class {
            let v = s.true_robust_welfare(g, delta)?;
            if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                best = Some((g.clone(), v));
            }
        }
        return best.ok_or_else(|| Error::Domain("empty policy class".into()));
    }
    if let Some(points) = s.cell_points() {
        let mut best: Option<(TreePolicy, f64)> = None;
        for g in enumerate_canonical_trees(points, s.d(), depth, &[])? {
            let v = s.true_robust_welfare(&g, delta)?;
            if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                best = Some((g, v));
            }
        }
        return best.ok_or_else(|| Error::Internal("no canonical trees".into()));
    }
    line_true_optimum(s, delta, depth)
}

/// Exact optimum over threshold rules on the line. The welfare of a fixed
/// leaf pair is piecewise quadratic in the threshold with extrema only at
/// score crossings or kinks, so scanning those plus constants is exact.
fn line_true_optimum(
    s: &SyntheticScenario,
    delta: f64,
    depth: usize,
) -> Result<(TreePolicy, f64)> {
    if depth > 1 {
        return Err(Error::Config(
            "true optimum on line scenarios supports depth <= 1".into(),
        ));
    }
    let d = s.d();
    let mut best = {
        let mut top: Option<(TreePolicy, f64)> = None;
        for a in 1..=d {
            let g = TreePolicy::leaf(a);
            let v = s.true_robust_welfare(&g, delta)?;
            if top.as_ref().is_none_or(|(_, bv)| v > *bv) {
                top = Some((g, v));
            }
        }
        top.expect("at least two arms")
    };
    if depth == 0 {
        return Ok(best);
    }

    for t in s.line_threshold_candidates(delta) {
        for left in 1..=d {
            for right in 1..=d {
                if left == right {
                    continue;
                }
                let g = TreePolicy::split(1, t, TreePolicy::leaf(left), TreePolicy::leaf(right));
                let v = s.true_robust_welfare(&g, delta)?;
                if v > best.1 {
                    best = (g, v);
                }
            }
        }
    }
    Ok(best)
}

impl SyntheticScenario {
    /// Thresholds at which the optimal depth-1 rule can sit: crossings of
    /// the floored per-arm score functions (affine-affine and affine-floor
    /// roots) inside the target range.
    fn line_threshold_candidates(&self, delta: f64) -> Vec<f64> {
        let Some((lo, hi, intercepts, slopes)) = self.line_params() else {
            return vec![];
        };
        let d = intercepts.len();
        let mut out = Vec::new();
        let mut push = |t: f64| {
            if t > lo && t < hi {
                out.push(t);
            }
        };
        for a in 0..d {
            for b in (a + 1)..d {
                let ds = slopes[a] - slopes[b];
                if ds.abs() > 1e-300 {
                    push((intercepts[b] - intercepts[a]) / ds);
                }
            }
        }
        if self.outcome_space.lower.is_finite() {
            for a in 0..d {
                if slopes[a].abs() > 1e-300 {
                    push((self.outcome_space.lower + delta - intercepts[a]) / slopes[a]);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn line_params(&self) -> Option<(f64, f64, Vec<f64>, Vec<f64>)> {
        match &self.kind {
            super::ScenarioKind::Line { target_range, intercepts, slopes, .. } => {
                Some((target_range.0, target_range.1, intercepts.clone(), slopes.clone()))
            }
            super::ScenarioKind::Cells { .. } => None,
        }
    }
}

/// Run the full regret experiment. Rows are emitted in `(size, rep)` order
/// and are a pure function of the configuration.
pub fn regret_experiment(s: &SyntheticScenario, cfg: &RegretConfig) -> Result<Vec<RegretRow>> {
    if cfg.reps == 0 {
        return Err(Error::Config("need at least one replication".into()));
    }
    let (_, best_value) = true_dr_optimum(s, cfg.delta, cfg.depth)?;
    let mut rows = Vec::with_capacity(cfg.sizes.len() * cfg.reps);
    for (size_idx, &(n_s, n_t)) in cfg.sizes.iter().enumerate() {
        for rep in 0..cfg.reps {
            let seed = derive_seed(cfg.master_seed, size_idx as u64, rep as u64);
            let tc = s.sample_target(n_t, derive_seed(seed, 1, 0))?;
            let pred = if cfg.oracle_cmr {
                let mut m = Mat::zeros(tc.n(), s.d());
                for j in 0..tc.n() {
                    for a in 1..=s.d() {
                        m.set(j, a - 1, s.true_cmr(tc.row(j), a));
                    }
                }
                m
            } else {
                let ds = s.sample_source(n_s, derive_seed(seed, 2, 0))?;
                let model = fit_cmr(&ds, &cfg.cmr, derive_seed(seed, 3, 0))?;
                model.predict_matrix(&tc)?
            };
            let gamma = RobustScoreMatrix::from_predictions(&pred, cfg.delta, s.outcome_space)?;
            let gamma0 = RobustScoreMatrix::from_predictions(&pred, 0.0, s.outcome_space)?;
            let (dr_rule, _) = fit_rule(s, &gamma, &tc, cfg.depth)?;
            let (naive_rule, _) = fit_rule(s, &gamma0, &tc, cfg.depth)?;
            rows.push(RegretRow {
                n_s,
                n_t,
                rep,
                seed,
                r_dro: best_value - s.true_robust_welfare(&dr_rule, cfg.delta)?,
                naive_target_welfare: s.true_target_welfare(&naive_rule)?,
                dr_target_welfare: s.true_target_welfare(&dr_rule)?,
            });
        }
    }
    Ok(rows)
}

/// Outcome of the plug-in/robust argmax-set comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub delta: f64,
    /// Whether every plug-in optimum is also a robust optimum.
    pub inclusion_holds: bool,
    pub naive_optima: usize,
    pub robust_optima: usize,
    /// A plug-in-optimal policy that is not robust-optimal, when one exists.
    pub counterexample: Option<TreePolicy>,
    /// The class realizes the pointwise-best source rule.
    pub first_best_in_class: bool,
    /// `m_S(x, a) - delta` clears the outcome floor everywhere.
    pub floor_slack_everywhere: bool,
}

const ARGMAX_TOL: f64 = 1e-12;

/// Compare the plug-in and robust argmax sets over the scenario's policy
/// class by exact evaluation. Discrete scenarios (or an explicit class)
/// only: argmax sets over a continuum of thresholds are not enumerable.
pub fn equivalence_check(
    s: &SyntheticScenario,
    delta: f64,
    depth: usize,
) -> Result<EquivalenceReport> {
    let policies: Vec<TreePolicy> = match (&s.policy_class, s.cell_points()) {
        (Some(class), _) => class.clone(),
        (None, Some(points)) => enumerate_canonical_trees(points, s.d(), depth, &[])?,
        (None, None) => {
            return Err(Error::Config(
                "equivalence check needs a discrete scenario or an explicit class".into(),
            ))
        }
    };
    let points = s
        .cell_points()
        .ok_or_else(|| Error::Config("equivalence check needs covariate cells".into()))?
        .clone();

    let mut assignments = Vec::with_capacity(policies.len());
    let mut naive_values = Vec::with_capacity(policies.len());
    let mut robust_values = Vec::with_capacity(policies.len());
    for g in &policies {
        assignments.push(g.assignments(&points)?);
        naive_values.push(s.true_robust_welfare(g, 0.0)?);
        robust_values.push(s.true_robust_welfare(g, delta)?);
    }
    let naive_max = naive_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let robust_max = robust_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let robust_set: std::collections::BTreeSet<Vec<usize>> = assignments
        .iter()
        .zip(&robust_values)
        .filter(|(_, &v)| v >= robust_max - ARGMAX_TOL)
        .map(|(a, _)| a.clone())
        .collect();
    let naive_set: std::collections::BTreeSet<Vec<usize>> = assignments
        .iter()
        .zip(&naive_values)
        .filter(|(_, &v)| v >= naive_max - ARGMAX_TOL)
        .map(|(a, _)| a.clone())
        .collect();

    let mut counterexample = None;
    for (i, g) in policies.iter().enumerate() {
        if naive_values[i] >= naive_max - ARGMAX_TOL && !robust_set.contains(&assignments[i]) {
            counterexample = Some(g.clone());
            break;
        }
    }

    // Assumption flags: does some policy realize the pointwise-best rule,
    // and does the floor stay slack for every (cell, arm)?
    let first_best: Vec<usize> = (0..points.rows())
        .map(|i| {
            let x = points.row(i);
            (1..=s.d())
                .max_by(|&a, &b| {
                    s.true_cmr(x, a).total_cmp(&s.true_cmr(x, b)).then(b.cmp(&a))
                })
                .unwrap()
        })
        .collect();
    let first_best_in_class = assignments.iter().any(|a| a == &first_best);
    let weights = s.target_cell_weights().unwrap_or(&[]);
    let mut floor_slack_everywhere = true;
    for i in 0..points.rows() {
        if weights.get(i).copied().unwrap_or(0.0) <= 0.0 {
            continue;
        }
        for a in 1..=s.d() {
            if s.true_cmr(points.row(i), a) - delta < s.outcome_space.lower {
                floor_slack_everywhere = false;
            }
        }
    }

    Ok(EquivalenceReport {
        delta,
        inclusion_holds: counterexample.is_none(),
        naive_optima: naive_set.len(),
        robust_optima: robust_set.len(),
        counterexample,
        first_best_in_class,
        floor_slack_everywhere,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{example1_scenario, rate_scenario, two_state_scenario, EXAMPLE1_DELTA};

    #[test]
    fn example1_naive_regret_is_the_robust_gap() {
        // The plug-in rule picks g1; its robust regret is 0.125 - 0.100.
        let s = example1_scenario(0.75).unwrap();
        let (_, best) = true_dr_optimum(&s, EXAMPLE1_DELTA, 1).unwrap();
        let class = s.policy_class.clone().unwrap();
        let naive_robust = s.true_robust_welfare(&class[0], EXAMPLE1_DELTA).unwrap();
        assert!((best - naive_robust - 0.025).abs() < 1e-12);
    }

    #[test]
    fn oracle_cmr_large_sample_has_negligible_regret() {
        let s = two_state_scenario();
        let cfg = RegretConfig {
            sizes: vec![(0, 20_000)],
            reps: 3,
            delta: 1.0,
            depth: 1,
            oracle_cmr: true,
            cmr: CmrConfig::default(),
            master_seed: 99,
        };
        for row in regret_experiment(&s, &cfg).unwrap() {
            assert!(row.r_dro >= -1e-9);
            assert!(row.r_dro <= 1e-3, "r_dro = {}", row.r_dro);
        }
    }

    #[test]
    fn rows_are_reproducible() {
        let s = two_state_scenario();
        let cfg = RegretConfig {
            sizes: vec![(200, 150)],
            reps: 2,
            delta: 0.5,
            depth: 1,
            oracle_cmr: false,
            cmr: CmrConfig { rounds: 10, ..Default::default() },
            master_seed: 7,
        };
        let a = regret_experiment(&s, &cfg).unwrap();
        let b = regret_experiment(&s, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn line_optimum_matches_dense_scan() {
        let s = rate_scenario();
        for delta in [0.0, 0.25, 0.9] {
            let (_, exact) = true_dr_optimum(&s, delta, 1).unwrap();
            // Dense threshold scan as an independent check.
            let mut best = f64::NEG_INFINITY;
            for i in 0..=2_000 {
                let t = i as f64 / 2_000.0;
                for (l, r) in [(1, 2), (2, 1)] {
                    let g = TreePolicy::split(
                        1,
                        t,
                        TreePolicy::leaf(l),
                        TreePolicy::leaf(r),
                    );
                    best = best.max(s.true_robust_welfare(&g, delta).unwrap());
                }
            }
            for a in 1..=2 {
                best = best.max(s.true_robust_welfare(&TreePolicy::leaf(a), delta).unwrap());
            }
            assert!(
                exact >= best - 1e-9,
                "delta {delta}: scan found {best}, optimum claims {exact}"
            );
            assert!(exact <= best + 1e-6);
        }
    }

    #[test]
    fn equivalence_inclusion_at_zero_delta() {
        let s = two_state_scenario();
        let rep = equivalence_check(&s, 0.0, 1).unwrap();
        assert!(rep.inclusion_holds);
        assert_eq!(rep.naive_optima, rep.robust_optima);
    }

    #[test]
    fn example1_breaks_inclusion_and_names_g1() {
        let s = example1_scenario(0.75).unwrap();
        let rep = equivalence_check(&s, EXAMPLE1_DELTA, 1).unwrap();
        assert!(!rep.inclusion_holds);
        assert!(!rep.first_best_in_class);
        assert!(!rep.floor_slack_everywhere);
        let g1 = &s.policy_class.as_ref().unwrap()[0];
        assert_eq!(rep.counterexample.as_ref(), Some(g1));
    }

    #[test]
    fn unbounded_space_inclusion_over_random_scores() {
        // With no floor the robust objective is the plug-in objective minus
        // a constant, so argmax sets coincide.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..25 {
            let cells = rng.random_range(2..5);
            let points: Vec<Vec<f64>> = (0..cells).map(|i| vec![i as f64]).collect();
            let raw: Vec<f64> = (0..cells).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let cmr: Vec<Vec<f64>> = (0..cells)
                .map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let s = SyntheticScenario::cells(
                "random",
                Mat::from_rows(&points).unwrap(),
                weights.clone(),
                weights,
                Mat::from_rows(&cmr).unwrap(),
                Mat::zeros(cells, 2),
                vec![super::super::NoiseLaw::PointMass; 2],
                0.0,
                crate::data::OutcomeSpace::unbounded(),
                None,
            )
            .unwrap();
            let rep = equivalence_check(&s, 1.7, 2).unwrap();
            assert!(rep.inclusion_holds);
            assert!(rep.floor_slack_everywhere);
        }
    }
}
