//! Closed-form assembly of the trajectory cost as an explicit quadratic.
//!
//! The cost trades squared torque error against weighted machine losses
//! along the horizon, with an end weight on the terminal torque error:
//!
//! ```text
//! J = ∫₀ᵀ ( (τ(t) − τ*)² + W_L · P_loss(t) ) dt  +  T · (τ(T) − τ*)²
//! ```
//!
//! Substituting the polynomial parameterization makes every integrand a
//! polynomial in t of degree ≤ 6, so the integral is evaluated exactly with
//! the monomial rule ∫₀ᵀ (t/T)^m dt = T/(m+1). The expansion is derived once
//! and implemented as explicit coefficient formulas, which keeps machine
//! parameters changeable at runtime. A Gauss–Legendre quadrature oracle over
//! the same integrand provides an independent numerical route for testing.
//!
//! The iron-loss term uses |ω| so that the loss contribution is nonnegative
//! for either rotation direction.

use nalgebra::{SMatrix, SVector};

use crate::machine::{power_loss, torque, DqCurrents, MachineParams};
use crate::trajectory::{FreeCoefficients, PolynomialTrajectory, FREE_COEFFS};

type Mat6 = SMatrix<f64, FREE_COEFFS, FREE_COEFFS>;
type Vec6 = SVector<f64, FREE_COEFFS>;

/// Everything the cost depends on besides the free coefficients.
#[derive(Clone, Debug)]
pub struct CostContext {
    /// Torque reference (N·m).
    pub tau_ref: f64,
    /// Mechanical speed, assumed constant over the horizon (rad/s).
    pub omega: f64,
    /// Initial currents; these become the zero-order coefficients.
    pub i0: DqCurrents,
    /// Horizon (s).
    pub horizon: f64,
    /// Loss weight.
    pub loss_weight: f64,
    /// Machine constants.
    pub params: MachineParams,
}

impl CostContext {
    /// Trajectory induced by this context and a free-coefficient vector.
    pub fn trajectory(&self, x: &FreeCoefficients) -> PolynomialTrajectory {
        PolynomialTrajectory::from_parts(self.i0, x, self.horizon)
    }
}

/// The cost as `J(x) = xᵀ H x + gᵀ x + c` over the six free coefficients.
#[derive(Clone, Debug)]
pub struct QuadraticCost {
    pub h: Mat6,
    pub g: Vec6,
    pub c: f64,
}

/// Gram matrix of the normalized monomials s, s², s³ on [0, 1].
const M1: [[f64; 3]; 3] = [
    [1.0 / 3.0, 1.0 / 4.0, 1.0 / 5.0],
    [1.0 / 4.0, 1.0 / 5.0, 1.0 / 6.0],
    [1.0 / 5.0, 1.0 / 6.0, 1.0 / 7.0],
];

/// First moments of s, s², s³ on [0, 1].
const M0: [f64; 3] = [1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0];

/// Expands the cost functional over the polynomial coefficients in closed
/// form. The two axes decouple: the torque error involves only i_q and the
/// loss terms are sums of per-axis squares, so H is block diagonal.
pub fn assemble_cost(ctx: &CostContext) -> QuadraticCost {
    let p = &ctx.params;
    let t = ctx.horizon;
    let kt = p.torque_constant();
    let c_cu = 1.5 * p.r;
    let c_fe = 1.5 * f64::from(p.n_p) * ctx.omega.abs() * p.k_fe;
    let w_l = ctx.loss_weight;

    // Pointwise integrands as quadratics in each current:
    //   d-axis: A_d i_d² + B_d i_d + C_d   (loss only)
    //   q-axis: A_q i_q² + B_q i_q + C_q   (torque error + loss)
    let a_d = w_l * (c_cu + c_fe * p.l_d * p.l_d);
    let b_d = 2.0 * w_l * c_fe * p.l_d * p.k;
    let c_d = w_l * c_fe * p.k * p.k;
    let a_q = kt * kt + w_l * (c_cu + c_fe * p.l_q * p.l_q);
    let b_q = -2.0 * kt * ctx.tau_ref;
    let c_q = ctx.tau_ref * ctx.tau_ref;

    let a0 = ctx.i0.i_d;
    let b0 = ctx.i0.i_q;

    let mut h = Mat6::zeros();
    let mut g = Vec6::zeros();
    for j in 0..3 {
        for k in 0..3 {
            h[(j, k)] = t * a_d * M1[j][k];
            // end weight adds kt² on every q-coefficient pair
            h[(3 + j, 3 + k)] = t * (a_q * M1[j][k] + kt * kt);
        }
        g[j] = t * (2.0 * a_d * a0 + b_d) * M0[j];
        g[3 + j] = t * ((2.0 * a_q * b0 + b_q) * M0[j] + 2.0 * kt * kt * b0 + b_q);
    }
    let c = t
        * (a_d * a0 * a0
            + b_d * a0
            + c_d
            + a_q * b0 * b0
            + b_q * b0
            + c_q
            + kt * kt * b0 * b0
            + b_q * b0
            + c_q);

    QuadraticCost { h, g, c }
}

/// Evaluates `xᵀ H x + gᵀ x + c`.
pub fn evaluate_cost(q: &QuadraticCost, x: &FreeCoefficients) -> f64 {
    (q.h * x).dot(x) + q.g.dot(x) + q.c
}

/// 7-point Gauss–Legendre nodes and weights on [-1, 1]; exact for
/// polynomials up to degree 13, comfortably above the degree-6 integrands.
const GL_NODES: [f64; 7] = [
    -0.9491079123427585,
    -0.7415311855993945,
    -0.4058451513773972,
    0.0,
    0.4058451513773972,
    0.7415311855993945,
    0.9491079123427585,
];
const GL_WEIGHTS: [f64; 7] = [
    0.1294849661688697,
    0.2797053914892767,
    0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892767,
    0.1294849661688697,
];

/// Numerical-quadrature route for the same cost: integrates the pointwise
/// integrand along the trajectory and adds the end weight. Test oracle for
/// [`assemble_cost`]; deliberately built from the machine-model primitives
/// rather than the expanded coefficients.
pub fn quadrature_cost_oracle(ctx: &CostContext, x: &FreeCoefficients) -> f64 {
    let traj = ctx.trajectory(x);
    let p = &ctx.params;
    let half = ctx.horizon / 2.0;
    let w_abs = ctx.omega.abs();

    let integrand = |t: f64| {
        let i = traj.eval_currents(t).expect("node inside horizon");
        let err = torque(i.i_q, p) - ctx.tau_ref;
        err * err + ctx.loss_weight * power_loss(i, w_abs, p)
    };

    let mut sum = 0.0;
    for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        sum += weight * integrand(half * (node + 1.0));
    }
    let i_end = traj.eval_currents(ctx.horizon).expect("horizon end");
    let err_end = torque(i_end.i_q, p) - ctx.tau_ref;
    half * sum + ctx.horizon * err_end * err_end
}
