//! Suboptimal trajectory optimization: unconstrained solve, least-distance
//! transform, L1 linearization, and the simplex backend.
//!
//! The pipeline exploits that the cost is a strictly convex quadratic:
//!
//! 1. Solve the first-order conditions `2 H x = −g` for the unconstrained
//!    optimum `x*`. If `x*` satisfies every constraint row it is returned
//!    directly — constrained and unconstrained optima coincide in that case.
//! 2. Factor `H = MᵀM` and substitute `β = M (x − x*)`. The cost becomes
//!    `‖β‖² + J(x*)`, a pure distance, and the rows stay affine.
//! 3. Replace `‖β‖²` by the separable surrogate `Σ|β_i|`, split each `β_i`
//!    into nonnegative parts, and solve the resulting 12-variable
//!    standard-form LP with the simplex method.
//!
//! Because `‖β‖₂ ≤ ‖β‖₁ ≤ √6 ‖β‖₂` in six dimensions, the surrogate's
//! extra cost over the true constrained optimum is bounded by a factor of
//! six of the constraint-induced cost — the price paid for swapping a QP
//! for an LP that solves in a handful of pivots.

use nalgebra::{Cholesky, SMatrix, SVector};

use crate::constraints::{LinearConstraintSet, RowLabel};
use crate::cost::{evaluate_cost, QuadraticCost};
use crate::error::{Error, Result};
use crate::simplex::{simplex_solve, LpStatus, StandardFormLp};
use crate::trajectory::{FreeCoefficients, FREE_COEFFS};

type Mat6 = SMatrix<f64, FREE_COEFFS, FREE_COEFFS>;
type Vec6 = SVector<f64, FREE_COEFFS>;

/// Row slack below which a constraint counts as violated / active.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Default pivot budget for one trajectory solve.
pub const DEFAULT_MAX_ITER: usize = 500;

/// The problem after the affine change of coordinates `β = M (x − x*)`.
#[derive(Clone, Debug)]
pub struct LeastDistanceProblem {
    /// Upper-triangular factor with `H = MᵀM`.
    pub m: Mat6,
    /// Unconstrained optimum in original coordinates.
    pub x_star: Vec6,
    /// Cost at the unconstrained optimum.
    pub j0: f64,
    /// Constraint rows expressed in β-coordinates: `g·β ≤ h`.
    pub rows: Vec<BetaRow>,
}

/// One constraint row in distance coordinates.
#[derive(Clone, Debug)]
pub struct BetaRow {
    pub g: [f64; FREE_COEFFS],
    pub h: f64,
    pub label: RowLabel,
}

/// How a trajectory solve terminated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    /// Unconstrained optimum was feasible; no LP ran.
    Interior,
    /// LP ran to optimality.
    Constrained,
}

/// Per-solve bookkeeping.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    /// Cost of the unconstrained optimum.
    pub unconstrained_cost: f64,
    /// Cost of the returned (possibly constrained) trajectory.
    pub achieved_cost: f64,
    /// Simplex pivots spent (0 on the interior path).
    pub lp_iterations: usize,
    pub status: SolveStatus,
    /// Labels of rows active at the returned point.
    pub active_rows: Vec<RowLabel>,
}

/// Solves the first-order conditions `2 H x = −g`.
pub fn solve_unconstrained(q: &QuadraticCost) -> Result<Vec6> {
    let chol = Cholesky::new(2.0 * q.h).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(&(-q.g)))
}

/// Factors the cost and maps the constraint rows into distance coordinates.
pub fn to_least_distance(
    q: &QuadraticCost,
    x_star: &Vec6,
    cons: &LinearConstraintSet,
) -> Result<LeastDistanceProblem> {
    let chol = Cholesky::new(q.h).ok_or(Error::NotPositiveDefinite)?;
    let m = chol.l().transpose(); // H = MᵀM with M upper triangular
    let m_lower_t = chol.l(); // Mᵀ
    let j0 = evaluate_cost(q, x_star);
    let mut rows = Vec::with_capacity(cons.len());
    for row in &cons.rows {
        let a = Vec6::from_column_slice(&row.a);
        // g = M⁻ᵀ a, so that g·β = a·(x − x*)
        let g = m_lower_t
            .solve_lower_triangular(&a)
            .ok_or(Error::NotPositiveDefinite)?;
        let h = row.b - a.dot(x_star);
        rows.push(BetaRow {
            g: [g[0], g[1], g[2], g[3], g[4], g[5]],
            h,
            label: row.label,
        });
    }
    Ok(LeastDistanceProblem {
        m,
        x_star: *x_star,
        j0,
        rows,
    })
}

/// Splits `β = z⁺ − z⁻` and emits the 12-variable standard form with the
/// separable objective `Σ (z⁺ + z⁻)`. Every row is scaled to unit
/// coefficient norm; current and voltage rows otherwise differ by four
/// orders of magnitude after the distance transform, which starves the
/// simplex tolerances.
pub fn linearize_and_standardize(ldp: &LeastDistanceProblem) -> StandardFormLp {
    let n = 2 * FREE_COEFFS;
    let mut rows = Vec::with_capacity(ldp.rows.len());
    let mut rhs = Vec::with_capacity(ldp.rows.len());
    for row in &ldp.rows {
        let norm = row.g.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-300);
        let mut r = vec![0.0; n];
        for j in 0..FREE_COEFFS {
            r[j] = row.g[j] / norm;
            r[FREE_COEFFS + j] = -row.g[j] / norm;
        }
        rows.push(r);
        rhs.push(row.h / norm);
    }
    StandardFormLp {
        objective: vec![1.0; n],
        rows,
        rhs,
    }
}

/// Full pipeline: unconstrained solve, feasibility short-circuit,
/// least-distance transform, linearization, simplex, and back-substitution.
pub fn solve_trajectory(
    q: &QuadraticCost,
    cons: &LinearConstraintSet,
) -> Result<(FreeCoefficients, Diagnostics)> {
    solve_trajectory_with_budget(q, cons, DEFAULT_MAX_ITER)
}

/// As [`solve_trajectory`] with an explicit pivot budget.
pub fn solve_trajectory_with_budget(
    q: &QuadraticCost,
    cons: &LinearConstraintSet,
    max_iter: usize,
) -> Result<(FreeCoefficients, Diagnostics)> {
    let x_star = solve_unconstrained(q)?;
    let j0 = evaluate_cost(q, &x_star);

    if cons.min_slack(&x_star) >= -FEASIBILITY_TOL {
        return Ok((
            x_star,
            Diagnostics {
                unconstrained_cost: j0,
                achieved_cost: j0,
                lp_iterations: 0,
                status: SolveStatus::Interior,
                active_rows: active_labels(cons, &x_star),
            },
        ));
    }

    let ldp = to_least_distance(q, &x_star, cons)?;
    let lp = linearize_and_standardize(&ldp);
    let sol = simplex_solve(&lp, max_iter);
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::IterationLimit => return Err(Error::IterationLimit(sol.iterations)),
        // the objective Σ(z⁺+z⁻) is bounded below by zero
        LpStatus::Unbounded => return Err(Error::Infeasible),
    }

    let beta = Vec6::from_fn(|j, _| sol.z[j] - sol.z[FREE_COEFFS + j]);
    let delta = ldp
        .m
        .solve_upper_triangular(&beta)
        .ok_or(Error::NotPositiveDefinite)?;
    let x = x_star + delta;

    Ok((
        x,
        Diagnostics {
            unconstrained_cost: j0,
            achieved_cost: evaluate_cost(q, &x),
            lp_iterations: sol.iterations,
            status: SolveStatus::Constrained,
            active_rows: active_labels(cons, &x),
        },
    ))
}

fn active_labels(cons: &LinearConstraintSet, x: &Vec6) -> Vec<RowLabel> {
    cons.rows
        .iter()
        .zip(cons.slacks(x))
        .filter(|(_, s)| s.abs() <= 10.0 * FEASIBILITY_TOL)
        .map(|(r, _)| r.label)
        .collect()
}
