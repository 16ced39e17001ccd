//! dq-frame electrical model of a surface-mounted PMSM.
//!
//! Electrical dynamics (rotor coordinates, peak-value scaling):
//!
//! ```text
//! L_d di_d/dt = -R i_d + n_p ω L_q i_q + u_d
//! L_q di_q/dt = -R i_q - n_p ω L_d i_d - n_p ω K + u_q
//! τ           = (3/2) n_p K i_q
//! ```
//!
//! Reluctance torque and magnetic saturation are neglected, so the model is
//! linear for constant rotor speed. The module also provides the exact
//! algebraic inverse (currents + derivatives → voltages), the copper and
//! hysteresis-iron loss model, and a fixed-step plant integrator for
//! closed-loop simulation.

use crate::error::{Error, Result};

/// Electrical RK4 substeps per plant step.
pub const DEFAULT_SUBSTEPS: usize = 4;

/// Electrical and mechanical constants of the machine.
///
/// All values are SI with currents and voltages in peak scaling. The
/// mechanical entries (`j_rot`, `tau_friction`) only drive the simulated
/// plant; the controller never reads them.
#[derive(Clone, Debug, PartialEq)]
pub struct MachineParams {
    /// Stator resistance (Ω).
    pub r: f64,
    /// Direct-axis inductance (H).
    pub l_d: f64,
    /// Quadrature-axis inductance (H).
    pub l_q: f64,
    /// Motor constant, peak (V·s).
    pub k: f64,
    /// Pole pairs.
    pub n_p: u32,
    /// Hysteresis iron-loss constant (A/(V·s)).
    pub k_fe: f64,
    /// Rated peak current (A).
    pub i_max: f64,
    /// DC-link voltage (V).
    pub u_dc: f64,
    /// Fraction of the DC-link voltage available to the controller.
    pub u_limit_fraction: f64,
    /// Rated mechanical speed (rad/s).
    pub omega_rated: f64,
    /// Rotor plus load inertia (kg·m²), simulation only.
    pub j_rot: f64,
    /// Viscous friction coefficient (N·m·s), simulation only.
    pub tau_friction: f64,
}

impl MachineParams {
    /// Checks every parameter against its admissible range.
    pub fn validate(&self) -> Result<()> {
        let chk = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(what.to_string()))
            }
        };
        chk(self.r > 0.0, "r must be > 0")?;
        chk(self.l_d > 0.0, "l_d must be > 0")?;
        chk(self.l_q > 0.0, "l_q must be > 0")?;
        chk(self.k > 0.0, "k must be > 0")?;
        chk(self.n_p >= 1, "n_p must be >= 1")?;
        chk(self.k_fe >= 0.0, "k_fe must be >= 0")?;
        chk(self.i_max > 0.0, "i_max must be > 0")?;
        chk(self.u_dc > 0.0, "u_dc must be > 0")?;
        chk(
            self.u_limit_fraction > 0.0 && self.u_limit_fraction <= 1.0,
            "u_limit_fraction must be in (0, 1]",
        )?;
        chk(self.omega_rated > 0.0, "omega_rated must be > 0")?;
        chk(self.j_rot > 0.0, "j_rot must be > 0")?;
        chk(self.tau_friction >= 0.0, "tau_friction must be >= 0")?;
        Ok(())
    }

    /// Torque constant (3/2)·n_p·K (N·m/A).
    pub fn torque_constant(&self) -> f64 {
        1.5 * f64::from(self.n_p) * self.k
    }

    /// Peak stator voltage available to the controller (V).
    pub fn u_max(&self) -> f64 {
        self.u_limit_fraction * self.u_dc
    }
}

impl Default for MachineParams {
    /// The 2.6 kW surface-mounted lab machine used throughout the tests:
    /// rated 8.4 N·m / 5.6 A peak / 3000 rpm, three pole pairs.
    fn default() -> Self {
        Self {
            r: 0.92,
            l_d: 4.8e-3,
            l_q: 7.2e-3,
            k: 0.334,
            n_p: 3,
            k_fe: 1.27,
            i_max: 5.6,
            u_dc: 330.0,
            u_limit_fraction: 0.75,
            omega_rated: 100.0 * std::f64::consts::PI,
            j_rot: 2.0e-3,
            tau_friction: 1.0e-4,
        }
    }
}

/// Direct and quadrature currents (A, peak).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DqCurrents {
    pub i_d: f64,
    pub i_q: f64,
}

impl DqCurrents {
    pub const fn new(i_d: f64, i_q: f64) -> Self {
        Self { i_d, i_q }
    }

    /// Current vector magnitude (A).
    pub fn magnitude(&self) -> f64 {
        self.i_d.hypot(self.i_q)
    }
}

/// Direct and quadrature voltages (V, peak).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DqVoltages {
    pub u_d: f64,
    pub u_q: f64,
}

impl DqVoltages {
    pub const fn new(u_d: f64, u_q: f64) -> Self {
        Self { u_d, u_q }
    }
}

/// Full simulated plant state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantState {
    pub currents: DqCurrents,
    /// Mechanical rotor speed (rad/s).
    pub omega: f64,
    /// Mechanical angle (rad), wrapped to [0, 2π); diagnostics only.
    pub theta: f64,
}

/// Right-hand side of the electrical equations: di/dt for given currents,
/// voltages and (frozen) mechanical speed.
pub fn electrical_derivatives(
    s: DqCurrents,
    u: DqVoltages,
    omega: f64,
    p: &MachineParams,
) -> DqCurrents {
    let we = f64::from(p.n_p) * omega; // electrical speed
    DqCurrents {
        i_d: (-p.r * s.i_d + we * p.l_q * s.i_q + u.u_d) / p.l_d,
        i_q: (-p.r * s.i_q - we * p.l_d * s.i_d - we * p.k + u.u_q) / p.l_q,
    }
}

/// Electromagnetic torque (N·m) for a quadrature current.
pub fn torque(i_q: f64, p: &MachineParams) -> f64 {
    p.torque_constant() * i_q
}

/// Copper plus hysteresis iron losses (W).
///
/// The iron term carries the signed speed exactly as modeled; callers that
/// need a nonnegative loss figure (the cost functional does) pass |ω|.
pub fn power_loss(s: DqCurrents, omega: f64, p: &MachineParams) -> f64 {
    let copper = 1.5 * p.r * (s.i_d * s.i_d + s.i_q * s.i_q);
    let psi_d = p.l_d * s.i_d + p.k;
    let psi_q = p.l_q * s.i_q;
    let iron = 1.5 * f64::from(p.n_p) * omega * p.k_fe * (psi_d * psi_d + psi_q * psi_q);
    copper + iron
}

/// Exact algebraic inverse of [`electrical_derivatives`]: the voltages that
/// produce the given current derivatives at the given state and speed.
pub fn flat_voltages(
    s: DqCurrents,
    ds_dt: DqCurrents,
    omega: f64,
    p: &MachineParams,
) -> DqVoltages {
    let we = f64::from(p.n_p) * omega;
    DqVoltages {
        u_d: p.l_d * ds_dt.i_d + p.r * s.i_d - we * p.l_q * s.i_q,
        u_q: p.l_q * ds_dt.i_q + p.r * s.i_q + we * p.l_d * s.i_d + we * p.k,
    }
}

/// Advances the electrical subsystem by `dt` under zero-order-hold voltage
/// and frozen mechanical speed, using `substeps` classical RK4 steps.
pub fn electrical_step(
    s: DqCurrents,
    u: DqVoltages,
    omega: f64,
    dt: f64,
    substeps: usize,
    p: &MachineParams,
) -> DqCurrents {
    let h = dt / substeps as f64;
    let mut i = s;
    for _ in 0..substeps {
        let k1 = electrical_derivatives(i, u, omega, p);
        let k2 = electrical_derivatives(
            DqCurrents::new(i.i_d + 0.5 * h * k1.i_d, i.i_q + 0.5 * h * k1.i_q),
            u,
            omega,
            p,
        );
        let k3 = electrical_derivatives(
            DqCurrents::new(i.i_d + 0.5 * h * k2.i_d, i.i_q + 0.5 * h * k2.i_q),
            u,
            omega,
            p,
        );
        let k4 = electrical_derivatives(
            DqCurrents::new(i.i_d + h * k3.i_d, i.i_q + h * k3.i_q),
            u,
            omega,
            p,
        );
        i.i_d += h / 6.0 * (k1.i_d + 2.0 * k2.i_d + 2.0 * k3.i_d + k4.i_d);
        i.i_q += h / 6.0 * (k1.i_q + 2.0 * k2.i_q + 2.0 * k3.i_q + k4.i_q);
    }
    i
}

/// Advances the full plant by one control period: electrical RK4 substeps
/// at frozen speed, then one explicit mechanical step
/// `J dω/dt = τ − τ_load − friction·ω`.
pub fn plant_step(
    state: PlantState,
    u: DqVoltages,
    tau_load: f64,
    dt: f64,
    p: &MachineParams,
) -> Result<PlantState> {
    if dt <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "plant step dt must be > 0, got {dt}"
        )));
    }
    let currents = electrical_step(state.currents, u, state.omega, dt, DEFAULT_SUBSTEPS, p);
    let tau_m = torque(currents.i_q, p);
    let domega = (tau_m - tau_load - p.tau_friction * state.omega) / p.j_rot;
    let omega = state.omega + dt * domega;
    let two_pi = 2.0 * std::f64::consts::PI;
    let theta = (state.theta + dt * state.omega).rem_euclid(two_pi);
    Ok(PlantState {
        currents,
        omega,
        theta,
    })
}
