//! Linearized current and voltage constraints on the free coefficients.
//!
//! The feasible current region is a box: the direct current is restricted to
//! `[i_d_min, 0]` (only negative values are useful, they weaken the stator
//! flux), with `i_d_min` twice the loss-optimal field-weakening current at
//! rated speed and clamped to half the current circle. The quadrature range
//! is then widened until the box corners sit on the current circle.
//!
//! The voltage region is a rectangle obtained from a steady-state sweep of
//! the machine equations over that current box at a maximum speed; the
//! rectangle is scaled by a single factor so that its farthest corner lies
//! exactly on the available voltage circle.
//!
//! Sampling both boxes at a handful of collocation times along the horizon
//! turns them into affine inequalities `a·x ≤ b` on the six free trajectory
//! coefficients. Four collocation points and four two-sided quantities give
//! the 32-row constraint set the solver is sized for.

use crate::cost::CostContext;
use crate::error::{Error, Result};
use crate::trajectory::{FreeCoefficients, FREE_COEFFS};

/// Current box bounds (A).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurrentBounds {
    pub id_min: f64,
    pub id_max: f64,
    pub iq_min: f64,
    pub iq_max: f64,
}

/// Voltage rectangle bounds (V).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoltageBounds {
    pub ud_min: f64,
    pub ud_max: f64,
    pub uq_min: f64,
    pub uq_max: f64,
}

/// Which physical quantity a constraint row bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Id,
    Iq,
    Ud,
    Uq,
}

/// Which side of the box the row enforces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

/// Provenance of one affine row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowLabel {
    pub quantity: Quantity,
    pub side: Side,
    /// Collocation time (s).
    pub time: f64,
}

impl std::fmt::Display for RowLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let q = match self.quantity {
            Quantity::Id => "i_d",
            Quantity::Iq => "i_q",
            Quantity::Ud => "u_d",
            Quantity::Uq => "u_q",
        };
        let s = match self.side {
            Side::Upper => "max",
            Side::Lower => "min",
        };
        write!(f, "{q} {s} @ t={:.6e}s", self.time)
    }
}

/// One affine inequality `a · x ≤ b` on the free coefficients.
#[derive(Clone, Debug)]
pub struct ConstraintRow {
    pub a: [f64; FREE_COEFFS],
    pub b: f64,
    pub label: RowLabel,
}

/// Stacked affine inequalities.
#[derive(Clone, Debug, Default)]
pub struct LinearConstraintSet {
    pub rows: Vec<ConstraintRow>,
}

impl LinearConstraintSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Slack `b − a·x` of every row at a point; negative means violated.
    pub fn slacks(&self, x: &FreeCoefficients) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let ax: f64 = r.a.iter().zip(x.iter()).map(|(a, xi)| a * xi).sum();
                r.b - ax
            })
            .collect()
    }

    /// Smallest slack at a point.
    pub fn min_slack(&self, x: &FreeCoefficients) -> f64 {
        self.slacks(x).into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Loss-optimal direct current at a given speed: the stationary point of the
/// copper-plus-iron loss over i_d,
/// `i_d = −L_d K / (L_d² + R/(n_p ω k_Fe))`.
pub fn id_min_optimal(p: &crate::machine::MachineParams, omega: f64) -> Result<f64> {
    if omega <= 0.0 {
        return Err(Error::FieldWeakeningUnavailable(format!(
            "speed must be positive, got {omega}"
        )));
    }
    if p.k_fe <= 0.0 {
        return Err(Error::FieldWeakeningUnavailable(
            "iron-loss constant is zero".to_string(),
        ));
    }
    let denom = p.l_d * p.l_d + p.r / (f64::from(p.n_p) * omega * p.k_fe);
    Ok(-(p.l_d * p.k) / denom)
}

/// Current box for a machine: doubled loss-optimal i_d floor (clamped to
/// half the current circle), i_d ≤ 0, and the widest symmetric i_q range
/// whose corners stay on the circle.
pub fn current_bounds(p: &crate::machine::MachineParams) -> CurrentBounds {
    let id_min = if p.k_fe > 0.0 {
        let optimal = id_min_optimal(p, p.omega_rated).expect("positive rated speed and k_fe");
        (2.0 * optimal).max(-p.i_max / 2.0)
    } else {
        0.0
    };
    let iq_max = (p.i_max * p.i_max - id_min * id_min).sqrt();
    CurrentBounds {
        id_min,
        id_max: 0.0,
        iq_min: -iq_max,
        iq_max,
    }
}

/// Voltage rectangle from a steady-state sweep of the machine equations over
/// the current box at speed `omega_max`, scaled by one factor γ so the
/// farthest corner lands exactly on the circle of radius
/// `u_limit_fraction · U_dc`.
pub fn voltage_bounds(
    p: &crate::machine::MachineParams,
    cb: &CurrentBounds,
    omega_max: f64,
) -> Result<VoltageBounds> {
    if omega_max <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "omega_max must be > 0, got {omega_max}"
        )));
    }
    let we = f64::from(p.n_p) * omega_max;
    let ud_max = we * p.l_q * cb.iq_max;
    let ud_min = p.r * cb.id_min - ud_max;
    let uq_max = p.r * cb.iq_max + we * p.k;
    let uq_min = -p.r * cb.iq_max + we * p.l_d * cb.id_min - we * p.k;
    if ud_max - ud_min <= 0.0 || uq_max - uq_min <= 0.0 || ud_max <= 0.0 || uq_max <= 0.0 {
        return Err(Error::DegenerateRectangle(format!(
            "u_d in [{ud_min}, {ud_max}], u_q in [{uq_min}, {uq_max}]"
        )));
    }
    let corner = ud_min
        .abs()
        .max(ud_max.abs())
        .hypot(uq_min.abs().max(uq_max.abs()));
    let gamma = p.u_max() / corner;
    Ok(VoltageBounds {
        ud_min: gamma * ud_min,
        ud_max: gamma * ud_max,
        uq_min: gamma * uq_min,
        uq_max: gamma * uq_max,
    })
}

/// Samples the current box and voltage rectangle at the collocation times,
/// producing eight affine rows per time on the free coefficients. Constant
/// contributions from the initial conditions and the back-EMF are folded
/// into the right-hand sides.
pub fn build_constraint_set(
    cb: &CurrentBounds,
    vb: &VoltageBounds,
    ctx: &CostContext,
    collocation: &[f64],
) -> Result<LinearConstraintSet> {
    if collocation.is_empty() {
        return Err(Error::InvalidCollocation("empty collocation grid".into()));
    }
    let t_max = ctx.horizon;
    for &t in collocation {
        if !(t > 0.0 && t <= t_max) {
            return Err(Error::InvalidCollocation(format!(
                "collocation time {t} outside (0, {t_max}]"
            )));
        }
    }

    let p = &ctx.params;
    let we = f64::from(p.n_p) * ctx.omega;
    let a0 = ctx.i0.i_d;
    let b0 = ctx.i0.i_q;
    let mut rows = Vec::with_capacity(8 * collocation.len());

    for &t in collocation {
        let s = t / t_max;
        // monomial s^{k+1} and derivative factor (k+1) s^k / T per coefficient
        let pow = [s, s * s, s * s * s];
        let dpow = [1.0 / t_max, 2.0 * s / t_max, 3.0 * s * s / t_max];

        // current rows: i_d(t) = a0 + Σ α_dk s^k, i_q analogous
        let cd = [pow[0], pow[1], pow[2], 0.0, 0.0, 0.0];
        let cq = [0.0, 0.0, 0.0, pow[0], pow[1], pow[2]];

        // voltage rows from the flat inverse of the machine equations
        let mut ud = [0.0; FREE_COEFFS];
        let mut uq = [0.0; FREE_COEFFS];
        for k in 0..3 {
            ud[k] = p.l_d * dpow[k] + p.r * pow[k];
            ud[3 + k] = -we * p.l_q * pow[k];
            uq[3 + k] = p.l_q * dpow[k] + p.r * pow[k];
            uq[k] = we * p.l_d * pow[k];
        }
        let ud_const = p.r * a0 - we * p.l_q * b0;
        let uq_const = p.r * b0 + we * p.l_d * a0 + we * p.k;

        push_pair(&mut rows, cd, cb.id_max - a0, a0 - cb.id_min, Quantity::Id, t);
        push_pair(&mut rows, cq, cb.iq_max - b0, b0 - cb.iq_min, Quantity::Iq, t);
        push_pair(
            &mut rows,
            ud,
            vb.ud_max - ud_const,
            ud_const - vb.ud_min,
            Quantity::Ud,
            t,
        );
        push_pair(
            &mut rows,
            uq,
            vb.uq_max - uq_const,
            uq_const - vb.uq_min,
            Quantity::Uq,
            t,
        );
    }

    Ok(LinearConstraintSet { rows })
}

fn push_pair(
    rows: &mut Vec<ConstraintRow>,
    a: [f64; FREE_COEFFS],
    upper_b: f64,
    lower_b: f64,
    quantity: Quantity,
    time: f64,
) {
    rows.push(ConstraintRow {
        a,
        b: upper_b,
        label: RowLabel {
            quantity,
            side: Side::Upper,
            time,
        },
    });
    let mut neg = a;
    for v in &mut neg {
        *v = -*v;
    }
    rows.push(ConstraintRow {
        a: neg,
        b: lower_b,
        label: RowLabel {
            quantity,
            side: Side::Lower,
            time,
        },
    });
}

/// Uniform collocation grid `{T/n, 2T/n, …, T}`.
pub fn uniform_collocation(horizon: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|j| horizon * j as f64 / n as f64).collect()
}
