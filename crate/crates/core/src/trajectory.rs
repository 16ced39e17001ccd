//! Degree-3 polynomial current trajectories over a finite horizon.
//!
//! Both current components are power series in normalized time,
//! `i(t) = Σ α_k (t/T)^k`, so every coefficient is in amperes regardless of
//! index and the monomials stay well conditioned. The zero-order
//! coefficients are the initial conditions; the remaining six are free and
//! chosen by the optimizer. Voltages along the trajectory follow from the
//! machine equations and the polynomial derivative, so they need no
//! parameters of their own.

use nalgebra::SVector;

use crate::error::{Error, Result};
use crate::machine::{flat_voltages, DqCurrents, DqVoltages, MachineParams};

/// Polynomial degree of the current trajectories.
pub const DEGREE: usize = 3;

/// Number of free coefficients (two axes, indices 1..=3).
pub const FREE_COEFFS: usize = 2 * DEGREE;

/// The six free coefficients, ordered `[α_d1, α_d2, α_d3, α_q1, α_q2, α_q3]`.
pub type FreeCoefficients = SVector<f64, FREE_COEFFS>;

/// A pair of degree-3 current polynomials over `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialTrajectory {
    /// Direct-axis coefficients (A), index k scales (t/T)^k.
    pub alpha_d: [f64; DEGREE + 1],
    /// Quadrature-axis coefficients (A).
    pub alpha_q: [f64; DEGREE + 1],
    /// Horizon (s).
    pub horizon: f64,
}

impl PolynomialTrajectory {
    /// Builds a trajectory from initial currents and free coefficients.
    pub fn from_parts(i0: DqCurrents, x: &FreeCoefficients, horizon: f64) -> Self {
        Self {
            alpha_d: [i0.i_d, x[0], x[1], x[2]],
            alpha_q: [i0.i_q, x[3], x[4], x[5]],
            horizon,
        }
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t > self.horizon || !t.is_finite() {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(t / self.horizon)
    }

    /// Current values at time `t ∈ [0, T]`.
    pub fn eval_currents(&self, t: f64) -> Result<DqCurrents> {
        let s = self.check_time(t)?;
        Ok(DqCurrents {
            i_d: poly_eval(&self.alpha_d, s),
            i_q: poly_eval(&self.alpha_q, s),
        })
    }

    /// Exact current derivatives (A/s) at time `t ∈ [0, T]`.
    pub fn eval_derivatives(&self, t: f64) -> Result<DqCurrents> {
        let s = self.check_time(t)?;
        Ok(DqCurrents {
            i_d: poly_deriv(&self.alpha_d, s) / self.horizon,
            i_q: poly_deriv(&self.alpha_q, s) / self.horizon,
        })
    }

    /// Voltages along the trajectory at time `t`, for frozen speed `omega`.
    ///
    /// Affine in the eight polynomial coefficients.
    pub fn eval_voltages(&self, t: f64, omega: f64, p: &MachineParams) -> Result<DqVoltages> {
        let i = self.eval_currents(t)?;
        let di = self.eval_derivatives(t)?;
        Ok(flat_voltages(i, di, omega, p))
    }
}

fn poly_eval(c: &[f64; DEGREE + 1], s: f64) -> f64 {
    // Horner in normalized time
    ((c[3] * s + c[2]) * s + c[1]) * s + c[0]
}

fn poly_deriv(c: &[f64; DEGREE + 1], s: f64) -> f64 {
    (3.0 * c[3] * s + 2.0 * c[2]) * s + c[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const T: f64 = 2e-3;

    fn traj(alpha_d: [f64; 4], alpha_q: [f64; 4]) -> PolynomialTrajectory {
        PolynomialTrajectory {
            alpha_d,
            alpha_q,
            horizon: T,
        }
    }

    #[test]
    fn zero_coefficients_evaluate_to_zero() {
        let tr = traj([0.0; 4], [0.0; 4]);
        for &t in &[0.0, T / 3.0, T] {
            let i = tr.eval_currents(t).unwrap();
            assert_eq!((i.i_d, i.i_q), (0.0, 0.0));
        }
    }

    #[test]
    fn unit_coefficients_sum_at_horizon_end() {
        let tr = traj([0.0; 4], [1.0, 1.0, 1.0, 1.0]);
        let i = tr.eval_currents(T).unwrap();
        assert_relative_eq!(i.i_q, 4.0, max_relative = 1e-15);
    }

    #[test]
    fn start_value_is_the_initial_condition() {
        let tr = traj([2.5, -1.0, 3.0, 0.5], [-0.7, 9.0, -2.0, 1.0]);
        let i = tr.eval_currents(0.0).unwrap();
        assert_eq!(i.i_d, 2.5);
        assert_eq!(i.i_q, -0.7);
    }

    #[test]
    fn evaluation_outside_horizon_is_rejected() {
        let tr = traj([0.0; 4], [0.0; 4]);
        assert!(tr.eval_currents(-1e-9).is_err());
        assert!(tr.eval_currents(T * (1.0 + 1e-9)).is_err());
        assert!(tr.eval_derivatives(2.0 * T).is_err());
        assert!(tr.eval_currents(f64::NAN).is_err());
    }

    #[test]
    fn constant_trajectory_has_zero_derivative() {
        let tr = traj([3.0, 0.0, 0.0, 0.0], [-1.5, 0.0, 0.0, 0.0]);
        let d = tr.eval_derivatives(T / 2.0).unwrap();
        assert_eq!((d.i_d, d.i_q), (0.0, 0.0));
    }

    #[test]
    fn linear_term_gives_inverse_horizon_slope() {
        let tr = traj([0.0; 4], [0.0, 1.0, 0.0, 0.0]);
        for &t in &[0.0, T / 4.0, T] {
            let d = tr.eval_derivatives(t).unwrap();
            assert_relative_eq!(d.i_q, 1.0 / T, max_relative = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(
            c in proptest::array::uniform8(-5.0f64..5.0),
            frac in 0.1f64..0.9,
        ) {
            let tr = traj([c[0], c[1], c[2], c[3]], [c[4], c[5], c[6], c[7]]);
            let t = frac * T;
            let h = T * 1e-6;
            let plus = tr.eval_currents(t + h).unwrap();
            let minus = tr.eval_currents(t - h).unwrap();
            let exact = tr.eval_derivatives(t).unwrap();
            let fd_q = (plus.i_q - minus.i_q) / (2.0 * h);
            let fd_d = (plus.i_d - minus.i_d) / (2.0 * h);
            let scale = exact.i_q.abs().max(1.0);
            prop_assert!((fd_q - exact.i_q).abs() <= 1e-6 * scale);
            let scale = exact.i_d.abs().max(1.0);
            prop_assert!((fd_d - exact.i_d).abs() <= 1e-6 * scale);
        }

        #[test]
        fn voltage_map_is_affine_in_coefficients(
            a in proptest::array::uniform8(-5.0f64..5.0),
            b in proptest::array::uniform8(-5.0f64..5.0),
            frac in 0.0f64..1.0,
            w in -300.0f64..300.0,
        ) {
            let p = MachineParams::default();
            let t = frac * T;
            let ta = traj([a[0], a[1], a[2], a[3]], [a[4], a[5], a[6], a[7]]);
            let tb = traj([b[0], b[1], b[2], b[3]], [b[4], b[5], b[6], b[7]]);
            let sum = traj(
                [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]],
                [a[4] + b[4], a[5] + b[5], a[6] + b[6], a[7] + b[7]],
            );
            let zero = traj([0.0; 4], [0.0; 4]);
            let ua = ta.eval_voltages(t, w, &p).unwrap();
            let ub = tb.eval_voltages(t, w, &p).unwrap();
            let us = sum.eval_voltages(t, w, &p).unwrap();
            let u0 = zero.eval_voltages(t, w, &p).unwrap();
            prop_assert!((us.u_d - (ua.u_d + ub.u_d - u0.u_d)).abs() < 1e-9);
            prop_assert!((us.u_q - (ua.u_q + ub.u_q - u0.u_q)).abs() < 1e-9);
        }
    }

    #[test]
    fn back_emf_compensation_for_zero_trajectory() {
        let p = MachineParams::default();
        let tr = traj([0.0; 4], [0.0; 4]);
        let w = 100.0 * std::f64::consts::PI;
        let u = tr.eval_voltages(T / 2.0, w, &p).unwrap();
        assert_relative_eq!(u.u_d, 0.0, epsilon = 1e-12);
        assert_relative_eq!(u.u_q, 3.0 * w * 0.334, max_relative = 1e-12);
    }

    #[test]
    fn from_parts_places_coefficients() {
        let x = FreeCoefficients::from_column_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let tr = PolynomialTrajectory::from_parts(DqCurrents::new(-1.0, 7.0), &x, T);
        assert_eq!(tr.alpha_d, [-1.0, 1.0, 2.0, 3.0]);
        assert_eq!(tr.alpha_q, [7.0, 4.0, 5.0, 6.0]);
    }
}
