//! Dense two-phase primal simplex for the tiny LPs used by the oracles.
//!
//! Solves `min c'x  s.t.  Ax = b, x >= 0` on a dense tableau with Bland's
//! rule, so it terminates on degenerate instances. Problem sizes here are a
//! few hundred variables at most (discrete transport couplings), which keeps
//! the O(m*n) pivots cheap and avoids an external solver dependency.

use crate::error::{Error, Result};

/// Pivot tolerance: entries smaller than this are treated as zero.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal objective value; meaningful only when `status` is `Optimal`.
    pub objective: f64,
    /// Primal solution in the original variables.
    pub x: Vec<f64>,
}

/// Solve `min c'x` subject to `Ax = b`, `x >= 0`.
pub fn solve_equality_form(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let m = a.len();
    if b.len() != m {
        return Err(Error::Dimension("rhs length does not match constraint count".into()));
    }
    let n = c.len();
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Dimension(format!("constraint row {i} has wrong length")));
        }
    }

    // Tableau layout: n original columns, m artificial columns, rhs.
    let width = n + m + 1;
    let rhs = n + m;
    let mut tab = vec![vec![0.0; width]; m + 1];
    let mut basis = vec![0usize; m];

    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            tab[i][j] = flip * a[i][j];
        }
        tab[i][n + i] = 1.0;
        tab[i][rhs] = flip * b[i];
        basis[i] = n + i;
    }

    // Phase 1: minimize the sum of artificials.
    set_objective_row(&mut tab, &basis, &phase1_costs(n, m));
    run_simplex(&mut tab, &mut basis, n + m)?;
    let phase1_obj = -tab[m][rhs];
    if phase1_obj > 1e-9 {
        return Ok(LpSolution { status: LpStatus::Infeasible, objective: f64::NAN, x: vec![] });
    }

    // Drive any basic artificial out of the basis where possible.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab[i][j].abs() > PIVOT_TOL) {
                pivot(&mut tab, i, j);
                basis[i] = j;
            }
        }
    }

    // Phase 2 with the real costs; artificial columns may not re-enter.
    let mut costs = vec![0.0; n + m];
    costs[..n].copy_from_slice(c);
    set_objective_row(&mut tab, &basis, &costs);
    match run_simplex(&mut tab, &mut basis, n) {
        Ok(()) => {}
        Err(Error::Domain(_)) => {
            return Ok(LpSolution { status: LpStatus::Unbounded, objective: f64::NAN, x: vec![] })
        }
        Err(e) => return Err(e),
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = tab[i][rhs];
        }
    }
    let objective = (0..n).map(|j| c[j] * x[j]).sum();
    Ok(LpSolution { status: LpStatus::Optimal, objective, x })
}

fn phase1_costs(n: usize, m: usize) -> Vec<f64> {
    let mut costs = vec![0.0; n + m];
    for cost in costs.iter_mut().skip(n) {
        *cost = 1.0;
    }
    costs
}

/// Rebuild the objective row (reduced costs) for the given basis and costs.
fn set_objective_row(tab: &mut [Vec<f64>], basis: &[usize], costs: &[f64]) {
    let m = basis.len();
    let width = tab[0].len();
    for j in 0..width - 1 {
        tab[m][j] = costs[j];
    }
    tab[m][width - 1] = 0.0;
    for i in 0..m {
        let cb = costs[basis[i]];
        if cb != 0.0 {
            for j in 0..width {
                tab[m][j] -= cb * tab[i][j];
            }
        }
    }
}

/// Bland's rule iterations. `enter_limit` restricts entering columns (used to
/// bar artificials in phase 2). Returns `Err(Domain)` on unboundedness.
fn run_simplex(tab: &mut [Vec<f64>], basis: &mut [usize], enter_limit: usize) -> Result<()> {
    let m = basis.len();
    let width = tab[0].len();
    let rhs = width - 1;
    let max_iters = 50_000 + 200 * (m + enter_limit);

    for _ in 0..max_iters {
        // Entering: lowest index with negative reduced cost.
        let Some(enter) = (0..enter_limit).find(|&j| tab[m][j] < -PIVOT_TOL) else {
            return Ok(());
        };

        // Leaving: min ratio, ties broken by lowest basic-variable index.
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let coef = tab[i][enter];
            if coef > PIVOT_TOL {
                let ratio = tab[i][rhs] / coef;
                let better = ratio < best_ratio - PIVOT_TOL
                    || (ratio < best_ratio + PIVOT_TOL
                        && leave.is_some_and(|l| basis[i] < basis[l]));
                if better || leave.is_none() {
                    best_ratio = ratio.min(best_ratio);
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Err(Error::Domain("LP is unbounded".into()));
        };

        pivot(tab, leave, enter);
        basis[leave] = enter;
    }
    Err(Error::Internal("simplex iteration limit exceeded".into()))
}

fn pivot(tab: &mut [Vec<f64>], row: usize, col: usize) {
    let width = tab[0].len();
    let p = tab[row][col];
    for j in 0..width {
        tab[row][j] /= p;
    }
    for i in 0..tab.len() {
        if i != row {
            let factor = tab[i][col];
            if factor != 0.0 {
                for j in 0..width {
                    tab[i][j] -= factor * tab[row][j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_minimum() {
        // min x + 2y  s.t. x + y = 1 -> x = 1, obj 1.
        let sol =
            solve_equality_form(&[vec![1.0, 1.0]], &[1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-10);
        assert!((sol.x[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inequality_via_slack() {
        // min -x  s.t. x + s = 2  -> x = 2.
        let sol =
            solve_equality_form(&[vec![1.0, 1.0]], &[2.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 2.0).abs() < 1e-10);
    }

    #[test]
    fn infeasible_detected() {
        // x + y = 1 and x + y = 2 cannot both hold.
        let sol = solve_equality_form(
            &[vec![1.0, 1.0], vec![1.0, 1.0]],
            &[1.0, 2.0],
            &[1.0, 1.0],
        )
        .unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // min -x  s.t. x - y = 0: x can grow without bound.
        let sol =
            solve_equality_form(&[vec![1.0, -1.0]], &[0.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn transportation_instance() {
        // Two sources (0.5, 0.5), two sinks (0.5, 0.5), costs [[0,1],[1,0]]:
        // identity shipping is optimal with cost 0.
        let a = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        ];
        let b = vec![0.5, 0.5, 0.5, 0.5];
        let c = vec![0.0, 1.0, 1.0, 0.0];
        let sol = solve_equality_form(&a, &b, &c).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective.abs() < 1e-10);
    }

    #[test]
    fn degenerate_instance_terminates() {
        // Redundant constraints force degenerate pivots; Bland's rule must
        // still terminate at the optimum.
        let a = vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]];
        let b = vec![1.0, 1.0, 1.0];
        let c = vec![1.0, 3.0, 0.0];
        let sol = solve_equality_form(&a, &b, &c).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-10);
    }
}
