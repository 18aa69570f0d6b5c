//! Explicit worst-case transport maps and the 1-D Wasserstein-1 distance.
//!
//! The worst case in a Wasserstein-1 ball is attained by a deterministic
//! map acting on the assigned coordinate only: a `-delta` shift when the
//! outcome space is unbounded below; otherwise a contraction toward the
//! lower bound that removes exactly `delta` from the conditional mean, or a
//! full collapse onto the bound when even that is out of reach.

use crate::data::OutcomeSpace;
use crate::error::{Error, Result};
use crate::mat::Mat;

use super::DiscreteConditional;

/// Apply the worst-case map for the arm `action` (1-based) to a discrete
/// conditional with conditional mean `m_s` on that coordinate.
pub fn worst_case_transport(
    cond: &DiscreteConditional,
    action: usize,
    delta: f64,
    ys: &OutcomeSpace,
    m_s: f64,
) -> Result<DiscreteConditional> {
    if action == 0 || action > cond.dim() {
        return Err(Error::Domain(format!("action {action} outside 1..={}", cond.dim())));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("transport budget must be >= 0, got {delta}")));
    }
    if !m_s.is_finite() {
        return Err(Error::Domain("conditional mean must be finite".into()));
    }
    let c = action - 1;
    let lower = ys.lower;

    let mut atoms = cond.atoms().clone();
    if lower.is_infinite() {
        for i in 0..atoms.rows() {
            atoms.set(i, c, atoms.get(i, c) - delta);
        }
    } else if m_s - delta > lower {
        // Contraction toward the bound; requires mass strictly above it.
        if !(m_s > lower) {
            return Err(Error::Domain(format!(
                "conditional mean {m_s} must exceed the lower bound {lower} \
                 when the shifted mean stays above it"
            )));
        }
        let scale = delta / (m_s - lower);
        for i in 0..atoms.rows() {
            let y = atoms.get(i, c);
            atoms.set(i, c, y - scale * (y - lower));
        }
    } else {
        for i in 0..atoms.rows() {
            atoms.set(i, c, lower);
        }
    }
    DiscreteConditional::new(atoms, cond.weights().to_vec(), ys)
}

/// Wasserstein-1 distance between two weighted atom sets on the line,
/// computed as the area between the quantile functions.
pub fn wasserstein1_1d(
    a_values: &[f64],
    a_weights: &[f64],
    b_values: &[f64],
    b_weights: &[f64],
) -> Result<f64> {
    let a = sorted_pairs(a_values, a_weights)?;
    let b = sorted_pairs(b_values, b_weights)?;

    let mut total = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut ca, mut cb) = (a[0].1, b[0].1); // cumulative mass up to current atom
    let mut u = 0.0;
    while ia < a.len() && ib < b.len() {
        let next = ca.min(cb);
        total += (next - u) * (a[ia].0 - b[ib].0).abs();
        u = next;
        if ca <= next + 1e-15 && ia + 1 < a.len() {
            ia += 1;
            ca += a[ia].1;
        } else if cb <= next + 1e-15 && ib + 1 < b.len() {
            ib += 1;
            cb += b[ib].1;
        } else if u >= 1.0 - 1e-12 {
            break;
        } else if ca <= next + 1e-15 || cb <= next + 1e-15 {
            // One side exhausted its atoms; the remaining mass gap is
            // within weight-validation tolerance.
            break;
        }
    }
    Ok(total)
}

fn sorted_pairs(values: &[f64], weights: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::Domain("empty atom set".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::Dimension("value and weight counts differ".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::Domain("weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("weights sum to {total}, expected 1")));
    }
    let mut pairs: Vec<(f64, f64)> =
        values.iter().cloned().zip(weights.iter().cloned()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(pairs)
}

/// Total `l1` cost of pairing each original atom with its transported image
/// (the coupling that realizes the worst case).
pub fn identity_coupling_cost(original: &DiscreteConditional, moved: &DiscreteConditional) -> f64 {
    let mut cost = 0.0;
    for i in 0..original.n_atoms() {
        let w = original.weights()[i];
        for c in 0..original.dim() {
            cost += w * (original.atoms().get(i, c) - moved.atoms().get(i, c)).abs();
        }
    }
    cost
}

#[allow(dead_code)]
pub(crate) fn mat_row(values: &[f64]) -> Mat {
    Mat::from_rows(&[values.to_vec()]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robust::robust_score;

    fn cond(rows: &[Vec<f64>], weights: &[f64], ys: &OutcomeSpace) -> DiscreteConditional {
        DiscreteConditional::new(Mat::from_rows(rows).unwrap(), weights.to_vec(), ys).unwrap()
    }

    #[test]
    fn contraction_branch_substitution() {
        // lower = 0, m_s = 2, delta = 1: y = 2 maps to 2 - 1*2/2 = 1.
        let ys = OutcomeSpace::nonnegative();
        let c = cond(&[vec![2.0]], &[1.0], &ys);
        let moved = worst_case_transport(&c, 1, 1.0, &ys, 2.0).unwrap();
        assert!((moved.atoms().get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unbounded_branch_is_pure_shift() {
        let ys = OutcomeSpace::unbounded();
        let c = cond(&[vec![3.0, 5.0]], &[1.0], &ys);
        let moved = worst_case_transport(&c, 1, 0.7, &ys, 3.0).unwrap();
        assert!((moved.atoms().get(0, 0) - 2.3).abs() < 1e-15);
        // Other coordinates untouched.
        assert_eq!(moved.atoms().get(0, 1), 5.0);
    }

    #[test]
    fn floor_branch_collapses_coordinate() {
        let ys = OutcomeSpace::nonnegative();
        let c = cond(&[vec![0.2], vec![0.8]], &[0.5, 0.5], &ys);
        let moved = worst_case_transport(&c, 1, 1.0, &ys, 0.5).unwrap();
        for i in 0..2 {
            assert_eq!(moved.atoms().get(i, 0), 0.0);
        }
    }

    #[test]
    fn transported_mean_hits_robust_score() {
        let ys = OutcomeSpace::nonnegative();
        let c = cond(
            &[vec![0.5, 2.0], vec![1.5, 3.0], vec![4.0, 0.5]],
            &[0.25, 0.5, 0.25],
            &ys,
        );
        for action in [1usize, 2] {
            for delta in [0.0, 0.3, 1.2, 5.0] {
                let m = c.coord_mean(action);
                let moved = worst_case_transport(&c, action, delta, &ys, m).unwrap();
                let want = robust_score(m, delta, &ys);
                assert!(
                    (moved.coord_mean(action) - want).abs() < 1e-9,
                    "action {action} delta {delta}"
                );
                assert!(identity_coupling_cost(&c, &moved) <= delta + 1e-12);
            }
        }
    }

    #[test]
    fn w1_identical_is_zero() {
        let v = [0.3, 1.7, 2.0];
        let w = [0.2, 0.5, 0.3];
        assert_eq!(wasserstein1_1d(&v, &w, &v, &w).unwrap(), 0.0);
    }

    #[test]
    fn w1_pure_shift() {
        let a = [0.0, 1.0];
        let b = [1.0, 2.0];
        let w = [0.5, 0.5];
        let d = wasserstein1_1d(&a, &w, &b, &w).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w1_dominates_mean_gap() {
        // Kantorovich-Rubinstein with the identity test function: W1 is at
        // least the absolute mean difference, with equality for pure shifts.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let m = rng.random_range(1..6);
            let av: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let bv: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let aw = random_weights(&mut rng, n);
            let bw = random_weights(&mut rng, m);
            let w1 = wasserstein1_1d(&av, &aw, &bv, &bw).unwrap();
            let mean_a: f64 = av.iter().zip(&aw).map(|(v, w)| v * w).sum();
            let mean_b: f64 = bv.iter().zip(&bw).map(|(v, w)| v * w).sum();
            assert!(w1 >= (mean_a - mean_b).abs() - 1e-10);
        }
    }

    fn random_weights(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
        use rand::Rng;
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|w| w / total).collect()
    }

    #[test]
    fn w1_matches_lp_transport() {
        // Independent check: solve the transportation LP over the product
        // of supports and compare with the quantile sweep.
        use crate::lp;
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.random_range(2..7);
            let m = rng.random_range(2..7);
            let av: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let bv: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let aw = random_weights(&mut rng, n);
            let bw = random_weights(&mut rng, m);

            // min sum |ai - bj| pi_ij  s.t. row sums = aw, col sums = bw.
            let mut a_mat = vec![vec![0.0; n * m]; n + m];
            let mut c = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    a_mat[i][i * m + j] = 1.0;
                    a_mat[n + j][i * m + j] = 1.0;
                    c[i * m + j] = (av[i] - bv[j]).abs();
                }
            }
            let mut b = aw.clone();
            b.extend_from_slice(&bw);
            let sol = lp::solve_equality_form(&a_mat, &b, &c).unwrap();
            assert_eq!(sol.status, lp::LpStatus::Optimal);

            let sweep = wasserstein1_1d(&av, &aw, &bv, &bw).unwrap();
            assert!(
                (sweep - sol.objective).abs() < 1e-9,
                "sweep {sweep} vs lp {}",
                sol.objective
            );
        }
    }
}
