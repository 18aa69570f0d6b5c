//! LP primal oracle for the worst-case conditional welfare on a discrete
//! support.
//!
//! The closed form is dual-side; this oracle attacks the primal directly:
//! minimize the expected assigned coordinate over couplings with the source
//! conditional as left marginal and `l1` transport cost at most `delta`,
//! with destinations restricted to a finite grid. Any feasible coupling is a
//! genuine member of the ambiguity ball, so the LP value always upper-bounds
//! the true infimum; with a grid containing the worst-case map images it
//! attains it, which makes equality a two-sided check.

use crate::data::OutcomeSpace;
use crate::error::{Error, Result};
use crate::lp::{solve_equality_form, LpStatus};

use super::DiscreteConditional;

/// Destination grid that provably contains an optimal coupling's support:
/// the original atoms plus, per atom, the assigned coordinate moved by the
/// candidate worst-case maps (full shift, half shift, mean-preserving
/// contraction, collapse to the bound), all clamped into the outcome space.
pub fn default_transport_grid(
    cond: &DiscreteConditional,
    action: usize,
    delta: f64,
    ys: &OutcomeSpace,
) -> Vec<Vec<f64>> {
    let c = action - 1;
    let m_s = cond.coord_mean(action);
    let mut grid: Vec<Vec<f64>> = Vec::new();
    let mut push = |row: Vec<f64>| {
        if !grid.iter().any(|g: &Vec<f64>| {
            g.iter().zip(&row).all(|(a, b)| (a - b).abs() <= 1e-12)
        }) {
            grid.push(row);
        }
    };
    for i in 0..cond.n_atoms() {
        let base = cond.atoms().row(i).to_vec();
        let y = base[c];
        let mut variants = vec![y, (y - delta).max(ys.lower), (y - 0.5 * delta).max(ys.lower)];
        if ys.lower.is_finite() {
            variants.push(ys.lower);
            if m_s - delta > ys.lower && m_s > ys.lower {
                variants.push(y - delta * (y - ys.lower) / (m_s - ys.lower));
            }
        }
        for v in variants {
            let mut row = base.clone();
            row[c] = v;
            push(row);
        }
    }
    grid
}

/// Solve the finite transport LP: fixed left marginal, cost budget `delta`,
/// minimize the mean of coordinate `action` (1-based) at the destination.
///
/// The grid must include every original atom so that the identity coupling
/// is feasible.
pub fn primal_lp_worst_case(
    cond: &DiscreteConditional,
    action: usize,
    delta: f64,
    grid: &[Vec<f64>],
) -> Result<f64> {
    if action == 0 || action > cond.dim() {
        return Err(Error::Domain(format!("action {action} outside 1..={}", cond.dim())));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("budget must be >= 0, got {delta}")));
    }
    if grid.iter().any(|g| g.len() != cond.dim()) {
        return Err(Error::Dimension("grid atoms must have the conditional's dimension".into()));
    }
    let n = cond.n_atoms();
    let g = grid.len();
    for i in 0..n {
        let atom = cond.atoms().row(i);
        let found = grid
            .iter()
            .any(|dest| dest.iter().zip(atom).all(|(a, b)| (a - b).abs() <= 1e-9));
        if !found {
            return Err(Error::Domain(format!("grid does not contain original atom {i}")));
        }
    }

    // Variables: pi[i*g + j] >= 0 plus one slack for the cost budget.
    // Rows: per-atom marginal equalities, then the cost constraint.
    let n_vars = n * g + 1;
    let mut a = vec![vec![0.0; n_vars]; n + 1];
    let mut c = vec![0.0; n_vars];
    for i in 0..n {
        for j in 0..g {
            let col = i * g + j;
            a[i][col] = 1.0;
            let cost: f64 = (0..cond.dim())
                .map(|t| (cond.atoms().get(i, t) - grid[j][t]).abs())
                .sum();
            a[n][col] = cost;
            c[col] = grid[j][action - 1];
        }
    }
    a[n][n * g] = 1.0; // slack
    let mut b = cond.weights().to_vec();
    b.push(delta);

    let sol = solve_equality_form(&a, &b, &c)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective),
        LpStatus::Infeasible => {
            Err(Error::Internal("transport LP infeasible despite identity coupling".into()))
        }
        LpStatus::Unbounded => Err(Error::Internal("transport LP unbounded".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Mat;
    use crate::robust::robust_score;

    fn cond(rows: &[Vec<f64>], weights: &[f64], ys: &OutcomeSpace) -> DiscreteConditional {
        DiscreteConditional::new(Mat::from_rows(rows).unwrap(), weights.to_vec(), ys).unwrap()
    }

    #[test]
    fn zero_budget_returns_mean() {
        let ys = OutcomeSpace::nonnegative();
        let c = cond(&[vec![1.0, 3.0], vec![2.0, 0.5]], &[0.5, 0.5], &ys);
        let grid = default_transport_grid(&c, 1, 0.0, &ys);
        let value = primal_lp_worst_case(&c, 1, 0.0, &grid).unwrap();
        assert!((value - 1.5).abs() < 1e-9);
    }

    #[test]
    fn unbounded_space_matches_mean_minus_delta() {
        let ys = OutcomeSpace::unbounded();
        let c = cond(&[vec![-1.0, 2.0], vec![4.0, 0.0]], &[0.25, 0.75], &ys);
        for action in [1usize, 2] {
            for delta in [0.1, 0.5, 2.0] {
                let grid = default_transport_grid(&c, action, delta, &ys);
                let lp = primal_lp_worst_case(&c, action, delta, &grid).unwrap();
                let want = c.coord_mean(action) - delta;
                assert!((lp - want).abs() < 1e-9, "action {action} delta {delta}");
            }
        }
    }

    #[test]
    fn point_mass_on_grid_square() {
        // Point mass at (2, 5), action 1, delta 1, lower bound 0, with a
        // lattice grid: the optimum rides the budget down to 1.0.
        let ys = OutcomeSpace::nonnegative();
        let c = cond(&[vec![2.0, 5.0]], &[1.0], &ys);
        let mut grid = Vec::new();
        for i in 0..=10 {
            for j in 0..=10 {
                grid.push(vec![i as f64 * 0.5, j as f64 * 0.5]);
            }
        }
        let value = primal_lp_worst_case(&c, 1, 1.0, &grid).unwrap();
        assert!((value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn near_floor_atoms_need_contraction_points() {
        // One atom within delta of the bound: the constant-shift grid alone
        // cannot reach the closed form; the default grid's contraction
        // images can.
        let ys = OutcomeSpace::nonnegative();
        let c = cond(&[vec![0.5, 3.0], vec![10.0, 7.0]], &[0.5, 0.5], &ys);
        let delta = 2.0;
        let grid = default_transport_grid(&c, 1, delta, &ys);
        let lp = primal_lp_worst_case(&c, 1, delta, &grid).unwrap();
        let want = robust_score(c.coord_mean(1), delta, &ys);
        assert!((lp - want).abs() < 1e-9, "lp {lp} vs closed form {want}");
    }

    #[test]
    fn grid_missing_original_atom_is_rejected() {
        let ys = OutcomeSpace::nonnegative();
        let c = cond(&[vec![1.0]], &[1.0], &ys);
        assert!(primal_lp_worst_case(&c, 1, 0.5, &[vec![0.5]]).is_err());
    }

    #[test]
    fn duality_closure_random_instances() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(424242);
        for trial in 0..60 {
            let bounded = trial % 2 == 0;
            let ys =
                if bounded { OutcomeSpace::nonnegative() } else { OutcomeSpace::unbounded() };
            let d = rng.random_range(1..=3);
            let n = rng.random_range(1..=8);
            let lo = if bounded { 0.0 } else { -3.0 };
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(lo..4.0)).collect())
                .collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let c = cond(&rows, &weights, &ys);
            let action = rng.random_range(1..=d);
            for delta in [0.0, 0.1, 0.5, 2.0] {
                let grid = default_transport_grid(&c, action, delta, &ys);
                let lp = primal_lp_worst_case(&c, action, delta, &grid).unwrap();
                let want = robust_score(c.coord_mean(action), delta, &ys);
                assert!(
                    (lp - want).abs() < 1e-6,
                    "trial {trial} action {action} delta {delta}: lp {lp} vs {want}"
                );
            }
        }
    }
}
