//! Receding-horizon torque controller and cascaded PI speed loop.
//!
//! Every control period the controller predicts the currents one step ahead
//! (cancelling the computational delay between sampling and actuation),
//! rebuilds the trajectory problem at the measured speed, solves it, and
//! applies the initial voltage of the optimal trajectory. The speed loop is
//! a plain PI with conditional anti-windup that feeds the torque reference;
//! the machine side is model based, the mechanical side stays a robust
//! feedback loop.

use crate::constraints::{
    build_constraint_set, current_bounds, uniform_collocation, voltage_bounds, CurrentBounds,
    RowLabel, VoltageBounds,
};
use crate::cost::{assemble_cost, CostContext};
use crate::machine::{electrical_step, DqCurrents, DqVoltages, MachineParams, DEFAULT_SUBSTEPS};
use crate::optimizer::{solve_trajectory_with_budget, SolveStatus};
use crate::trajectory::PolynomialTrajectory;

/// Speed used when building the voltage rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VoltageBoundsMode {
    /// Build once from the configured maximum speed.
    #[default]
    FixedAtMax,
    /// Rebuild every sample from the instantaneous speed.
    PerSample,
}

/// Speed-loop PI gains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiGains {
    /// Proportional gain (N·m·s/rad).
    pub k_p: f64,
    /// Integral gain (N·m/rad).
    pub k_i: f64,
}

impl Default for PiGains {
    /// Overshoot-free defaults for the reference machine's default inertia:
    /// the PI zero sits at the slow closed-loop pole, so speed steps settle
    /// without crossing the target.
    fn default() -> Self {
        Self { k_p: 0.5, k_i: 2.0 }
    }
}

/// Controller configuration.
#[derive(Clone, Debug)]
pub struct ControllerConfig {
    /// Optimization horizon (s).
    pub horizon: f64,
    /// Control period (s).
    pub dt: f64,
    /// Loss weight in the cost.
    pub loss_weight: f64,
    /// Number of collocation points along the horizon.
    pub collocation_points: usize,
    /// Speed-loop gains.
    pub pi: PiGains,
    /// Torque-reference clamp (N·m).
    pub tau_max: f64,
    /// Maximum speed assumed by the voltage rectangle (rad/s).
    pub omega_max: f64,
    pub voltage_bounds_mode: VoltageBoundsMode,
    /// Simplex pivot budget per solve.
    pub lp_max_iter: usize,
    /// Pins the d-axis trajectory at its initial value; used by the
    /// field-weakening ablation studies.
    pub freeze_d_axis: bool,
    /// Engage the d-axis pin only from this scenario time (s) on, so the
    /// loop first settles into its normal operating point. Interpreted by
    /// the closed-loop harness.
    pub freeze_d_axis_from: Option<f64>,
}

impl ControllerConfig {
    /// 8 kHz / 2 ms defaults sized for the given machine: the torque clamp
    /// comes from the widest feasible quadrature current.
    pub fn for_machine(p: &MachineParams) -> Self {
        let cb = current_bounds(p);
        Self {
            horizon: 2e-3,
            dt: 125e-6,
            loss_weight: 0.05,
            collocation_points: 4,
            pi: PiGains::default(),
            tau_max: p.torque_constant() * cb.iq_max,
            omega_max: p.omega_rated,
            voltage_bounds_mode: VoltageBoundsMode::default(),
            lp_max_iter: 500,
            freeze_d_axis: false,
            freeze_d_axis_from: None,
        }
    }
}

/// Result of one torque-control step.
#[derive(Clone, Debug)]
pub struct StepDiagnostics {
    pub status: SolveStatus,
    pub lp_iterations: usize,
    pub unconstrained_cost: f64,
    pub achieved_cost: f64,
    pub active_rows: Vec<RowLabel>,
    /// Wall-clock spent in the solve (ns), informational.
    pub solve_nanos: u64,
    /// Set when the solver failed and the fallback voltage was applied.
    pub fault: bool,
    /// The planned trajectory (absent on fault).
    pub trajectory: Option<PolynomialTrajectory>,
}

/// Receding-horizon torque controller.
#[derive(Clone, Debug)]
pub struct TorqueController {
    pub cfg: ControllerConfig,
    params: MachineParams,
    current_bounds: CurrentBounds,
    fixed_voltage_bounds: VoltageBounds,
    /// Voltage commanded last period; the delay compensation propagates the
    /// measurement through it.
    pub last_voltage: DqVoltages,
}

impl TorqueController {
    pub fn new(cfg: ControllerConfig, params: MachineParams) -> crate::Result<Self> {
        params.validate()?;
        let cb = current_bounds(&params);
        let vb = voltage_bounds(&params, &cb, cfg.omega_max)?;
        Ok(Self {
            cfg,
            params,
            current_bounds: cb,
            fixed_voltage_bounds: vb,
            last_voltage: DqVoltages::default(),
        })
    }

    pub fn current_bounds(&self) -> &CurrentBounds {
        &self.current_bounds
    }

    /// The voltage rectangle in effect at the given speed.
    pub fn voltage_bounds(&self, omega: f64) -> crate::Result<VoltageBounds> {
        match self.cfg.voltage_bounds_mode {
            VoltageBoundsMode::FixedAtMax => Ok(self.fixed_voltage_bounds),
            VoltageBoundsMode::PerSample => {
                voltage_bounds(&self.params, &self.current_bounds, omega.abs().max(1e-3))
            }
        }
    }

    /// One-step-ahead current prediction under the previously commanded
    /// voltage; same integrator as the plant's electrical subsystem.
    pub fn delay_compensate(&self, measured: DqCurrents, omega: f64, dt: f64) -> DqCurrents {
        delay_compensate(measured, self.last_voltage, omega, dt, &self.params)
    }

    /// Solves the trajectory problem and returns the voltage to apply.
    ///
    /// On solver faults the previous voltage is decayed by 10 % and flagged.
    pub fn torque_control_step(
        &mut self,
        predicted: DqCurrents,
        omega: f64,
        tau_ref: f64,
    ) -> (DqVoltages, StepDiagnostics) {
        let tau_cmd = tau_ref.clamp(-self.cfg.tau_max, self.cfg.tau_max);
        let ctx = CostContext {
            tau_ref: tau_cmd,
            omega,
            i0: predicted,
            horizon: self.cfg.horizon,
            loss_weight: self.cfg.loss_weight,
            params: self.params.clone(),
        };
        let vb = match self.voltage_bounds(omega) {
            Ok(vb) => vb,
            Err(_) => self.fixed_voltage_bounds,
        };
        let grid = uniform_collocation(self.cfg.horizon, self.cfg.collocation_points);
        let cons = build_constraint_set(&self.current_bounds, &vb, &ctx, &grid).map(|mut set| {
            if self.cfg.freeze_d_axis {
                // the pin supersedes the d-current box; keeping both would
                // turn a drifted initial value into an infeasible problem
                set.rows
                    .retain(|r| r.label.quantity != crate::constraints::Quantity::Id);
                add_d_axis_pin(&mut set, &grid, self.cfg.horizon);
            }
            set
        });

        let start = std::time::Instant::now();
        let solved = cons.and_then(|cons| {
            let q = assemble_cost(&ctx);
            solve_trajectory_with_budget(&q, &cons, self.cfg.lp_max_iter)
        });
        let solve_nanos = start.elapsed().as_nanos() as u64;

        match solved {
            Ok((x, diag)) => {
                let traj = ctx.trajectory(&x);
                let u0 = traj
                    .eval_voltages(0.0, omega, &self.params)
                    .expect("t = 0 is inside the horizon");
                // t = 0 is not a collocation point; clamp the applied sample
                let u = DqVoltages {
                    u_d: u0.u_d.clamp(vb.ud_min, vb.ud_max),
                    u_q: u0.u_q.clamp(vb.uq_min, vb.uq_max),
                };
                self.last_voltage = u;
                (
                    u,
                    StepDiagnostics {
                        status: diag.status,
                        lp_iterations: diag.lp_iterations,
                        unconstrained_cost: diag.unconstrained_cost,
                        achieved_cost: diag.achieved_cost,
                        active_rows: diag.active_rows,
                        solve_nanos,
                        fault: false,
                        trajectory: Some(traj),
                    },
                )
            }
            Err(_) => {
                let u = DqVoltages {
                    u_d: 0.9 * self.last_voltage.u_d,
                    u_q: 0.9 * self.last_voltage.u_q,
                };
                self.last_voltage = u;
                (
                    u,
                    StepDiagnostics {
                        status: SolveStatus::Constrained,
                        lp_iterations: 0,
                        unconstrained_cost: f64::NAN,
                        achieved_cost: f64::NAN,
                        active_rows: Vec::new(),
                        solve_nanos,
                        fault: true,
                        trajectory: None,
                    },
                )
            }
        }
    }
}

/// Pins the d-axis polynomial to its initial value by forcing the free
/// d-coefficients to contribute nothing at every collocation time.
fn add_d_axis_pin(set: &mut crate::constraints::LinearConstraintSet, grid: &[f64], horizon: f64) {
    use crate::constraints::{ConstraintRow, Quantity, Side};
    for &t in grid {
        let s = t / horizon;
        let a = [s, s * s, s * s * s, 0.0, 0.0, 0.0];
        let mut neg = a;
        for v in &mut neg {
            *v = -*v;
        }
        for (coeffs, side) in [(a, Side::Upper), (neg, Side::Lower)] {
            set.rows.push(ConstraintRow {
                a: coeffs,
                b: 0.0,
                label: RowLabel {
                    quantity: Quantity::Id,
                    side,
                    time: t,
                },
            });
        }
    }
}

/// One-step forward prediction of the electrical subsystem under the last
/// commanded voltage, with the speed frozen.
pub fn delay_compensate(
    measured: DqCurrents,
    last_u: DqVoltages,
    omega: f64,
    dt: f64,
    p: &MachineParams,
) -> DqCurrents {
    electrical_step(measured, last_u, omega, dt, DEFAULT_SUBSTEPS, p)
}

/// PI speed controller with conditional anti-windup.
#[derive(Clone, Debug)]
pub struct SpeedPi {
    pub gains: PiGains,
    /// Torque clamp; also bounds the integrator.
    pub tau_max: f64,
    pub integrator: f64,
}

impl SpeedPi {
    pub fn new(gains: PiGains, tau_max: f64) -> Self {
        Self {
            gains,
            tau_max,
            integrator: 0.0,
        }
    }

    /// One PI update. The integrator freezes while the output is clamped in
    /// the same direction as the error.
    pub fn step(&mut self, omega_ref: f64, omega: f64, dt: f64) -> f64 {
        let e = omega_ref - omega;
        let raw = self.gains.k_p * e + self.integrator;
        let clamped = raw.clamp(-self.tau_max, self.tau_max);
        let saturating = (raw > self.tau_max && e > 0.0) || (raw < -self.tau_max && e < 0.0);
        if !saturating {
            self.integrator =
                (self.integrator + self.gains.k_i * e * dt).clamp(-self.tau_max, self.tau_max);
        }
        clamped
    }
}
