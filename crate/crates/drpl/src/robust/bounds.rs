//! Necessary-condition diagnostics for ambiguity-set membership.
//!
//! A population inside the radius-`delta` ball must satisfy four families of
//! inequalities relating its CMR to the source CMR. Violating any of them
//! certifies the candidate is outside the set; passing all of them proves
//! nothing (the conditions are necessary, not sufficient).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// One checked inequality. `observed` and `bound` come from the binding
/// sub-case (the point/arm pair with the largest violation, or the largest
/// observed statistic when nothing violates).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundItem {
    pub item: String,
    pub bound: f64,
    pub observed: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmbiguityBoundsReport {
    pub delta: f64,
    pub items: Vec<BoundItem>,
    pub all_pass: bool,
}

const PASS_TOL: f64 = 1e-9;

/// Check the four membership inequalities for a candidate CMR matrix
/// against the source CMR at shared evaluation points.
///
/// `source_means[a-1]` and `target_means[a-1]` are the source- and
/// target-marginal means of the *source* CMR per arm, used in the
/// marginal-mean bounds.
pub fn ambiguity_bounds(
    source_m: &Mat,
    candidate_m: &Mat,
    delta: f64,
    source_means: &[f64],
    target_means: &[f64],
) -> Result<AmbiguityBoundsReport> {
    if source_m.rows() != candidate_m.rows() || source_m.cols() != candidate_m.cols() {
        return Err(Error::Dimension("source and candidate CMR shapes differ".into()));
    }
    if source_m.rows() == 0 {
        return Err(Error::Domain("need at least one evaluation point".into()));
    }
    let d = source_m.cols();
    if source_means.len() != d || target_means.len() != d {
        return Err(Error::Dimension("need one marginal mean per arm".into()));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("delta must be >= 0, got {delta}")));
    }
    let n = source_m.rows();

    // (i) pointwise CMR gap.
    let mut obs_i = 0.0f64;
    for j in 0..n {
        for a in 0..d {
            obs_i = obs_i.max((candidate_m.get(j, a) - source_m.get(j, a)).abs());
        }
    }
    let item_i = BoundItem {
        item: "C1.i".into(),
        bound: delta,
        observed: obs_i,
        pass: obs_i <= delta + PASS_TOL,
    };

    // (ii) pointwise treatment-contrast gap.
    let mut obs_ii = 0.0f64;
    for j in 0..n {
        for a1 in 0..d {
            for a2 in (a1 + 1)..d {
                let cand = candidate_m.get(j, a1) - candidate_m.get(j, a2);
                let src = source_m.get(j, a1) - source_m.get(j, a2);
                obs_ii = obs_ii.max((cand - src).abs());
            }
        }
    }
    let item_ii = BoundItem {
        item: "C1.ii".into(),
        bound: delta,
        observed: obs_ii,
        pass: obs_ii <= delta + PASS_TOL,
    };

    // (iii) marginal mean per arm; bound widens by the covariate-shift term.
    let mut binding_iii: Option<(f64, f64)> = None;
    for a in 0..d {
        let observed = (candidate_m.col_mean(a) - source_means[a]).abs();
        let bound = delta + (target_means[a] - source_means[a]).abs();
        binding_iii = Some(pick_binding(binding_iii, observed, bound));
    }
    let (obs_iii, bound_iii) = binding_iii.unwrap();
    let item_iii = BoundItem {
        item: "C1.iii".into(),
        bound: bound_iii,
        observed: obs_iii,
        pass: obs_iii <= bound_iii + PASS_TOL,
    };

    // (iv) marginal treatment contrasts.
    let mut binding_iv: Option<(f64, f64)> = None;
    for a1 in 0..d {
        for a2 in (a1 + 1)..d {
            let cand = candidate_m.col_mean(a1) - candidate_m.col_mean(a2);
            let src = source_means[a1] - source_means[a2];
            let shift = (target_means[a1] - target_means[a2]) - src;
            let observed = (cand - src).abs();
            let bound = delta + shift.abs();
            binding_iv = Some(pick_binding(binding_iv, observed, bound));
        }
    }
    let item_iv = match binding_iv {
        Some((obs, bound)) => BoundItem {
            item: "C1.iv".into(),
            bound,
            observed: obs,
            pass: obs <= bound + PASS_TOL,
        },
        // Single-arm candidate: no contrasts to check.
        None => BoundItem { item: "C1.iv".into(), bound: delta, observed: 0.0, pass: true },
    };

    let items = vec![item_i, item_ii, item_iii, item_iv];
    let all_pass = items.iter().all(|i| i.pass);
    Ok(AmbiguityBoundsReport { delta, items, all_pass })
}

fn pick_binding(current: Option<(f64, f64)>, observed: f64, bound: f64) -> (f64, f64) {
    match current {
        None => (observed, bound),
        Some((o, b)) => {
            if observed - bound > o - b {
                (observed, bound)
            } else {
                (o, b)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OutcomeSpace;
    use crate::robust::{worst_case_transport, DiscreteConditional};

    fn means(m: &Mat) -> Vec<f64> {
        (0..m.cols()).map(|a| m.col_mean(a)).collect()
    }

    #[test]
    fn identical_candidate_passes_with_full_slack() {
        let src = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.5]]).unwrap();
        let delta = 0.7;
        let source_means = vec![1.8, 1.4];
        let target_means = means(&src);
        let rep = ambiguity_bounds(&src, &src, delta, &source_means, &target_means).unwrap();
        assert!(rep.all_pass);
        assert_eq!(rep.items[0].observed, 0.0);
        assert_eq!(rep.items[0].bound, delta);
        assert_eq!(rep.items[1].observed, 0.0);
        // Items (iii)-(iv): observed equals the covariate-shift term, so the
        // slack is exactly delta.
        for item in &rep.items[2..] {
            assert!((item.bound - item.observed - delta).abs() < 1e-12, "{item:?}");
        }
    }

    #[test]
    fn single_point_excess_shift_fails_item_i() {
        let src = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.5]]).unwrap();
        let delta = 0.8;
        let mut cand = src.clone();
        cand.set(1, 0, src.get(1, 0) + 1.5 * delta);
        let m = means(&src);
        let rep = ambiguity_bounds(&src, &cand, delta, &m, &m).unwrap();
        assert!(!rep.items[0].pass);
        assert!((rep.items[0].observed - 1.5 * delta).abs() < 1e-12);
        assert!(!rep.all_pass);
    }

    #[test]
    fn transported_candidate_passes_with_zero_violation() {
        // Build the worst-case population at each point; its CMR moves by
        // exactly delta on the treated coordinate, which sits right on the
        // bound of items (i)-(ii).
        let ys = OutcomeSpace::nonnegative();
        let delta = 0.5;
        let points = [vec![2.0, 3.0], vec![4.0, 1.0]];
        let mut src_rows = Vec::new();
        let mut cand_rows = Vec::new();
        for point in &points {
            let c = DiscreteConditional::point_mass(point.clone(), &ys).unwrap();
            let moved = worst_case_transport(&c, 1, delta, &ys, c.coord_mean(1)).unwrap();
            src_rows.push(point.clone());
            cand_rows.push(vec![moved.coord_mean(1), moved.coord_mean(2)]);
        }
        let src = Mat::from_rows(&src_rows).unwrap();
        let cand = Mat::from_rows(&cand_rows).unwrap();
        let m = means(&src);
        let rep = ambiguity_bounds(&src, &cand, delta, &m, &m).unwrap();
        assert!(rep.items[0].pass, "{:?}", rep.items[0]);
        assert!(rep.items[1].pass, "{:?}", rep.items[1]);
        assert!((rep.items[0].observed - delta).abs() < 1e-12);
        assert!((rep.items[1].observed - delta).abs() < 1e-12);
        assert!(rep.all_pass);
    }
}
