//! Dense two-phase primal simplex for small standard-form LPs.
//!
//! Solves `min c·z  s.t.  A z ≤ b, z ≥ 0` on a classical tableau. Rows with
//! negative right-hand sides get artificial variables and a phase-one
//! feasibility solve. The entering variable takes the most negative reduced
//! cost with lowest-index tie-breaking, which keeps pivot counts within the
//! parameters-plus-rows budget; if the objective ever stalls on degenerate
//! vertices the rule drops to Bland's smallest-index selection, whose
//! termination guarantee rules out cycling. Problem sizes here are a dozen
//! structural variables and a few dozen rows, so no factorization or
//! sparsity machinery is warranted.

/// Outcome of an LP solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    /// Objective unbounded below; cannot occur for the nonnegative
    /// sign-split objectives produced by the trajectory pipeline.
    Unbounded,
}

/// A standard-form LP: minimize `objective · z` subject to
/// `rows[i] · z ≤ rhs[i]` and `z ≥ 0`.
#[derive(Clone, Debug)]
pub struct StandardFormLp {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl StandardFormLp {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Vertex solution returned by [`simplex_solve`].
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub z: Vec<f64>,
    pub status: LpStatus,
    /// Total pivots across both phases.
    pub iterations: usize,
    pub objective: f64,
}

const PIVOT_TOL: f64 = 1e-11;

/// Solves the LP with at most `max_iter` pivots.
pub fn simplex_solve(lp: &StandardFormLp, max_iter: usize) -> LpSolution {
    let n = lp.num_vars();
    let m = lp.num_rows();
    debug_assert!(lp.rows.iter().all(|r| r.len() == n));
    debug_assert_eq!(lp.rhs.len(), m);

    // Column layout: [structural | slacks | artificials | rhs].
    let artificial_rows: Vec<usize> = (0..m).filter(|&i| lp.rhs[i] < 0.0).collect();
    let n_art = artificial_rows.len();
    let slack0 = n;
    let art0 = n + m;
    let width = n + m + n_art + 1;
    let rhs_col = width - 1;

    let mut tab = vec![vec![0.0; width]; m];
    let mut basis = vec![0usize; m];
    let mut next_art = art0;
    for i in 0..m {
        let flip = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            tab[i][j] = flip * lp.rows[i][j];
        }
        tab[i][slack0 + i] = flip;
        tab[i][rhs_col] = flip * lp.rhs[i];
        if flip < 0.0 {
            tab[i][next_art] = 1.0;
            basis[i] = next_art;
            next_art += 1;
        } else {
            basis[i] = slack0 + i;
        }
    }

    let mut iterations = 0usize;

    // Phase one: minimize the sum of artificials.
    if n_art > 0 {
        // reduced costs: unit cost on artificials minus their basic rows
        let mut cost = vec![0.0; width];
        for (i, &b) in basis.iter().enumerate() {
            if b >= art0 {
                for j in 0..width {
                    cost[j] -= tab[i][j];
                }
            }
        }
        for a in art0..art0 + n_art {
            cost[a] += 1.0;
        }
        let status = pivot_loop(&mut tab, &mut cost, &mut basis, rhs_col, max_iter, &mut iterations);
        if status != LpStatus::Optimal {
            return finish(lp, &tab, &basis, status, iterations, rhs_col, n);
        }
        if -cost[rhs_col] > 1e-8 {
            return finish(lp, &tab, &basis, LpStatus::Infeasible, iterations, rhs_col, n);
        }
        // Drive any degenerate artificials out of the basis.
        for i in 0..m {
            if basis[i] >= art0 {
                if let Some(j) = (0..art0).find(|&j| tab[i][j].abs() > PIVOT_TOL) {
                    pivot(&mut tab, &mut cost, &mut basis, i, j);
                    iterations += 1;
                }
                // otherwise the row is redundant (0 = 0) and stays inert
            }
        }
        // Bar artificials from ever re-entering.
        for row in tab.iter_mut() {
            for a in art0..art0 + n_art {
                row[a] = 0.0;
            }
        }
    }

    // Phase two: the original objective, reduced by the current basis.
    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(&lp.objective);
    for i in 0..m {
        let cb = if basis[i] < n { lp.objective[basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                cost[j] -= cb * tab[i][j];
            }
        }
    }
    // artificials stay barred
    for a in art0..art0 + n_art {
        cost[a] = 1.0;
    }
    let status = pivot_loop(&mut tab, &mut cost, &mut basis, art0, max_iter, &mut iterations);
    finish(lp, &tab, &basis, status, iterations, rhs_col, n)
}

/// Pivots without objective progress tolerated before switching to the
/// slower anti-cycling rule.
const STALL_LIMIT: usize = 20;

/// Runs pivots until optimality, the iteration budget, or an unbounded ray.
/// Columns at index ≥ `col_limit` never enter.
fn pivot_loop(
    tab: &mut [Vec<f64>],
    cost: &mut [f64],
    basis: &mut [usize],
    col_limit: usize,
    max_iter: usize,
    iterations: &mut usize,
) -> LpStatus {
    let rhs_col = tab.first().map_or(0, |r| r.len() - 1);
    let mut stall = 0usize;
    loop {
        // entering: most negative reduced cost, lowest index on ties;
        // after a degenerate stall, plain lowest index (Bland)
        let enter = if stall < STALL_LIMIT {
            let mut best: Option<(usize, f64)> = None;
            for (j, &c) in cost.iter().enumerate().take(col_limit) {
                if c < -PIVOT_TOL && best.is_none_or(|(_, bc)| c < bc - 1e-15) {
                    best = Some((j, c));
                }
            }
            best.map(|(j, _)| j)
        } else {
            (0..col_limit).find(|&j| cost[j] < -PIVOT_TOL)
        };
        let Some(enter) = enter else {
            return LpStatus::Optimal;
        };
        // leaving: minimum ratio, ties broken by smallest basic index
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for (i, row) in tab.iter().enumerate() {
            if row[enter] > PIVOT_TOL {
                let ratio = row[rhs_col] / row[enter];
                let better = ratio < best - 1e-12
                    || (ratio < best + 1e-12 && leave.is_some_and(|l| basis[i] < basis[l]));
                if better || leave.is_none() {
                    best = ratio.min(best);
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return LpStatus::Unbounded;
        };
        if *iterations >= max_iter {
            return LpStatus::IterationLimit;
        }
        let before = cost[rhs_col];
        pivot(tab, cost, basis, leave, enter);
        *iterations += 1;
        stall = if cost[rhs_col] > before + 1e-12 { 0 } else { stall + 1 };
    }
}

fn pivot(tab: &mut [Vec<f64>], cost: &mut [f64], basis: &mut [usize], row: usize, col: usize) {
    let width = tab[row].len();
    let inv = 1.0 / tab[row][col];
    for j in 0..width {
        tab[row][j] *= inv;
    }
    tab[row][col] = 1.0;
    for i in 0..tab.len() {
        if i != row && tab[i][col].abs() > 0.0 {
            let f = tab[i][col];
            for j in 0..width {
                tab[i][j] -= f * tab[row][j];
            }
            tab[i][col] = 0.0;
        }
    }
    let f = cost[col];
    if f.abs() > 0.0 {
        for j in 0..width {
            cost[j] -= f * tab[row][j];
        }
        cost[col] = 0.0;
    }
    basis[row] = col;
}

fn finish(
    lp: &StandardFormLp,
    tab: &[Vec<f64>],
    basis: &[usize],
    status: LpStatus,
    iterations: usize,
    rhs_col: usize,
    n: usize,
) -> LpSolution {
    let mut z = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            z[b] = tab[i][rhs_col];
        }
    }
    let objective = lp.objective.iter().zip(&z).map(|(c, v)| c * v).sum();
    LpSolution {
        z,
        status,
        iterations,
        objective,
    }
}
