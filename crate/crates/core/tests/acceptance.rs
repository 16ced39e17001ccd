//! Acceptance suite: one test per acceptance criterion, each printing a
//! single PASS line with its measured figures (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! The quadratic-program oracle used by the suboptimality checks is an
//! active-set enumeration: it solves the equality-constrained KKT system
//! for every candidate set of active rows and keeps the best primal- and
//! dual-feasible solution. It shares no code with the least-distance / LP
//! production path.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use pmsm_mpc::constraints::{
    current_bounds, voltage_bounds, ConstraintRow, CurrentBounds, LinearConstraintSet, Quantity,
    RowLabel, Side, VoltageBounds,
};
use pmsm_mpc::controller::ControllerConfig;
use pmsm_mpc::cost::{assemble_cost, evaluate_cost, quadrature_cost_oracle, CostContext, QuadraticCost};
use pmsm_mpc::harness::{
    compute_metrics, run_closed_loop, ControllerKind, MetricWindows, ScenarioConfig, ScenarioMode,
    SimTrace,
};
use pmsm_mpc::machine::{DqCurrents, MachineParams};
use pmsm_mpc::optimizer::{solve_trajectory, SolveStatus};
use pmsm_mpc::trajectory::FreeCoefficients;

type Mat6 = SMatrix<f64, 6, 6>;
type Vec6 = SVector<f64, 6>;

fn machine() -> MachineParams {
    MachineParams::default()
}

fn config() -> ControllerConfig {
    ControllerConfig::for_machine(&machine())
}

fn bounds() -> (CurrentBounds, VoltageBounds) {
    let p = machine();
    let cb = current_bounds(&p);
    let vb = voltage_bounds(&p, &cb, p.omega_rated).unwrap();
    (cb, vb)
}

fn run_builtin(name: &str, cfg: &ControllerConfig) -> SimTrace {
    let sc = ScenarioConfig::builtin(name).unwrap();
    run_closed_loop(&sc, cfg, &machine()).unwrap()
}

// ─── random problem generator and QP oracle ─────────────────────────────────

struct RandomInstance {
    q: QuadraticCost,
    cons: LinearConstraintSet,
}

fn dummy_label() -> RowLabel {
    RowLabel {
        quantity: Quantity::Iq,
        side: Side::Upper,
        time: 1e-3,
    }
}

/// Random strictly convex quadratic with rows through a feasible point.
fn random_instance(rng: &mut impl Rng, n_rows: usize) -> RandomInstance {
    let a = Mat6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let h = a.transpose() * a + Mat6::identity() * rng.gen_range(0.05..0.5);
    let q = QuadraticCost {
        h,
        g: Vec6::from_fn(|_, _| rng.gen_range(-2.0..2.0)),
        c: rng.gen_range(-1.0..1.0),
    };
    let feasible_point = Vec6::from_fn(|_, _| rng.gen_range(-1.5..1.5));
    let rows = (0..n_rows)
        .map(|_| {
            let a: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let ap: f64 = a.iter().zip(feasible_point.iter()).map(|(a, v)| a * v).sum();
            ConstraintRow {
                a,
                b: ap + rng.gen_range(0.0..0.8),
                label: dummy_label(),
            }
        })
        .collect();
    RandomInstance {
        q,
        cons: LinearConstraintSet { rows },
    }
}

/// Exact constrained minimizer by enumeration of active sets: for every
/// subset of up to six rows, solve the equality-constrained KKT system and
/// keep the best candidate that is primal feasible with nonnegative
/// multipliers.
fn qp_oracle(q: &QuadraticCost, cons: &LinearConstraintSet) -> (Vec6, f64) {
    let m = cons.len();
    assert!(m <= 16, "oracle enumeration sized for small instances");
    let mut best: Option<(Vec6, f64)> = None;

    let mut consider = |x: Vec6, ok: bool| {
        if !ok {
            return;
        }
        if cons.min_slack(&x) < -1e-8 {
            return;
        }
        let j = evaluate_cost(q, &x);
        if best.as_ref().is_none_or(|(_, jb)| j < *jb) {
            best = Some((x, j));
        }
    };

    // empty active set: the unconstrained stationary point
    let unconstrained = nalgebra::Cholesky::new(2.0 * q.h)
        .expect("positive definite")
        .solve(&(-q.g));
    consider(unconstrained, true);

    for mask in 1u32..(1 << m) {
        let k = mask.count_ones() as usize;
        if k > 6 {
            continue;
        }
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        // KKT: [2H  Aᵀ; A  0] [x; λ] = [−g; b]
        let dim = 6 + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for i in 0..6 {
            for j in 0..6 {
                kkt[(i, j)] = 2.0 * q.h[(i, j)];
            }
            rhs[i] = -q.g[i];
        }
        for (r, &row_idx) in active.iter().enumerate() {
            let row = &cons.rows[row_idx];
            for j in 0..6 {
                kkt[(j, 6 + r)] = row.a[j];
                kkt[(6 + r, j)] = row.a[j];
            }
            rhs[6 + r] = row.b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = Vec6::from_fn(|i, _| sol[i]);
        let duals_ok = (0..k).all(|r| sol[6 + r] >= -1e-8);
        consider(x, duals_ok);
    }

    best.expect("instance is feasible by construction")
}

// ─── criteria ────────────────────────────────────────────────────────────────

#[test]
fn acceptance_01_cost_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let ctx = CostContext {
            tau_ref: rng.gen_range(-9.0..9.0),
            omega: rng.gen_range(-350.0..350.0),
            i0: DqCurrents::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
            horizon: rng.gen_range(0.5e-3..4e-3),
            loss_weight: rng.gen_range(0.0..0.2),
            params: machine(),
        };
        let x = FreeCoefficients::from_fn(|_, _| rng.gen_range(-8.0..8.0));
        let fast = evaluate_cost(&assemble_cost(&ctx), &x);
        let slow = quadrature_cost_oracle(&ctx, &x);
        let rel = (fast - slow).abs() / fast.abs().max(slow.abs()).max(1e-12);
        worst = worst.max(rel);
        assert!(
            rel <= 1e-8,
            "closed form {fast} vs quadrature {slow} (rel {rel:.3e})"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "criterion 01 cost oracle equivalence: PASS (1000 draws, worst rel err {worst:.2e}, {:.0} ms)",
        elapsed.as_secs_f64() * 1e3
    );
}

#[test]
fn acceptance_02_linearization_suboptimality_bound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut active_instances = 0usize;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut max_ratio = 0.0f64;
    while active_instances < 10_000 {
        let n_rows = rng.gen_range(2..=8);
        let inst = random_instance(&mut rng, n_rows);
        let (x, diag) = solve_trajectory(&inst.q, &inst.cons).unwrap();
        if diag.status == SolveStatus::Interior {
            continue;
        }
        active_instances += 1;
        let (_, j_qp) = qp_oracle(&inst.q, &inst.cons);
        let j0 = diag.unconstrained_cost;
        let j_lin = evaluate_cost(&inst.q, &x);
        let j_c = j_qp - j0;
        // worst-case linearization overhead: six times the constraint cost
        let bound = j0 + 6.0 * j_c;
        let slack = 1e-9 * bound.abs().max(1.0);
        assert!(
            j_lin <= bound + slack,
            "bound violated: J_lin {j_lin} > J0 {j0} + 6·J_C {j_c}"
        );
        worst_margin = worst_margin.max(j_lin - bound);
        if j_c > 1e-12 {
            max_ratio = max_ratio.max((j_lin - j0) / j_c);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "criterion 02 suboptimality bound: PASS (10000 active instances, max (J_lin−J0)/J_C {max_ratio:.3} ≤ 6, {:.1} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn acceptance_03_interior_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut interior_instances = 0usize;
    let mut worst = 0.0f64;
    while interior_instances < 1000 {
        let n_rows = rng.gen_range(2..=8);
        let inst = random_instance(&mut rng, n_rows);
        let (x_oracle, _) = qp_oracle(&inst.q, &inst.cons);
        // keep only instances whose exact optimum has no active rows
        if inst.cons.min_slack(&x_oracle) < 1e-7 {
            continue;
        }
        interior_instances += 1;
        let (x, diag) = solve_trajectory(&inst.q, &inst.cons).unwrap();
        assert_eq!(diag.status, SolveStatus::Interior);
        assert_eq!(diag.lp_iterations, 0);
        let rel = (x - x_oracle).norm() / x_oracle.norm().max(1.0);
        worst = worst.max(rel);
        assert!(rel <= 1e-9, "interior optimum mismatch: {rel:.3e}");
    }
    println!(
        "criterion 03 interior exactness: PASS (1000 interior instances, worst rel err {worst:.2e})"
    );
}

#[test]
fn acceptance_04_simplex_iteration_bound() {
    // randomized instances: pivots never exceed variables + rows
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut max_seen = 0usize;
    for _ in 0..5000 {
        let n_rows = rng.gen_range(2..=8);
        let inst = random_instance(&mut rng, n_rows);
        let (_, diag) = solve_trajectory(&inst.q, &inst.cons).unwrap();
        assert!(
            diag.lp_iterations <= 12 + n_rows,
            "iterations {} exceed {} on a {n_rows}-row instance",
            diag.lp_iterations,
            12 + n_rows
        );
        max_seen = max_seen.max(diag.lp_iterations);
    }

    // every closed-loop solve across the bench scenarios: 32 rows → bound 44
    let cfg = config();
    let mut max_loop = 0usize;
    let mut max_ns = 0u64;
    let mut total_ns = 0u64;
    let mut solves = 0u64;
    for name in ScenarioConfig::BUILTIN_NAMES {
        let trace = run_builtin(name, &cfg);
        for r in &trace.rows {
            assert!(
                r.lp_iterations <= 44,
                "{name}: {} pivots at t = {}",
                r.lp_iterations,
                r.time
            );
            max_loop = max_loop.max(r.lp_iterations);
            max_ns = max_ns.max(r.solve_nanos);
            total_ns += r.solve_nanos;
            solves += 1;
        }
    }
    println!(
        "criterion 04 iteration bound: PASS (random max {max_seen}, closed-loop max {max_loop} ≤ 44; \
         solve wall-clock mean {:.1} µs / max {:.1} µs, informational)",
        total_ns as f64 / solves as f64 / 1e3,
        max_ns as f64 / 1e3
    );
}

#[test]
fn acceptance_05_torque_step_at_standstill() {
    let cfg = config();
    let (cb, vb) = bounds();
    let trace = run_builtin("torque_step_0rpm", &cfg);
    let m = compute_metrics(
        &trace,
        &MetricWindows {
            step_time: 0.01,
            steady: (0.045, 0.06),
        },
        &cb,
        &vb,
    )
    .unwrap();

    // commanded 8.4 N·m clamps to the box's 7.289; torque settles on the
    // loss-weighted optimum just below that, and the ±2 % settle band is
    // anchored to the settled value
    assert!(
        m.settle_time <= 2e-3,
        "settle {:.3} ms exceeds 2 ms",
        m.settle_time * 1e3
    );
    assert!(m.overshoot_pct <= 5.0, "overshoot {:.2} %", m.overshoot_pct);
    assert_eq!(m.violation_count, 0, "constraint rows violated in trace");
    assert!(m.settled_torque > 0.95 * cfg.tau_max);
    println!(
        "criterion 05 torque step at standstill: PASS (settled {:.3} N·m, settle {:.2} ms, overshoot {:.2} %, violations 0)",
        m.settled_torque,
        m.settle_time * 1e3,
        m.overshoot_pct
    );
}

#[test]
fn acceptance_06_field_weakening_under_saturation() {
    let cfg = config();
    let (_, vb) = bounds();
    let trace = run_builtin("torque_step_2400rpm", &cfg);

    let pre: Vec<_> = trace.window(0.012, 0.02).to_vec();
    let id_pre = pre.iter().map(|r| r.i_d).sum::<f64>() / pre.len() as f64;

    // (a) the q-voltage rides its rectangle bound during the transient
    let post = trace.window(0.02, 0.12);
    let uq_peak = post.iter().map(|r| r.u_q).fold(f64::MIN, f64::max);
    assert!(
        uq_peak >= vb.uq_max - 1e-6,
        "u_q peak {uq_peak:.3} never reached bound {:.3}",
        vb.uq_max
    );

    // (b) the transient d-current dips at least 10 % below its pre-step value
    let id_min_seen = post.iter().map(|r| r.i_d).fold(f64::MAX, f64::min);
    assert!(
        id_min_seen <= 1.1 * id_pre,
        "i_d dip {id_min_seen:.3} vs pre-step {id_pre:.3}"
    );

    // (c) freezing i_d at its pre-step value must slow the torque rise
    let mut frozen_cfg = cfg.clone();
    frozen_cfg.freeze_d_axis_from = Some(0.02);
    let sc = ScenarioConfig::builtin("torque_step_2400rpm").unwrap();
    let frozen = run_closed_loop(&sc, &frozen_cfg, &machine()).unwrap();
    let tau_at = |tr: &SimTrace, t: f64| tr.rows[(t / tr.dt) as usize].tau;
    for t in [0.025, 0.03, 0.05, 0.08, 0.115] {
        assert!(
            tau_at(&frozen, t) < tau_at(&trace, t) - 0.5,
            "frozen run not slower at t = {t}"
        );
    }
    let normal_rise = post
        .iter()
        .find(|r| r.tau >= 0.5 * 6.9)
        .map(|r| r.time - 0.02)
        .expect("normal run reaches half torque");
    let frozen_reaches = frozen
        .window(0.02, 0.12)
        .iter()
        .any(|r| r.tau >= 0.5 * 6.9);
    println!(
        "criterion 06 field weakening under saturation: PASS (u_q rides {:.1} V bound, i_d {:.2} → {:.2} A, \
         ablation never reaches half torque vs {:.1} ms normally)",
        vb.uq_max,
        id_pre,
        id_min_seen,
        normal_rise * 1e3
    );
    assert!(!frozen_reaches, "frozen d-axis run still reached half torque");
}

#[test]
fn acceptance_07_loss_reduction_at_mid_speed() {
    let cfg = config();
    let (cb, vb) = bounds();
    let windows = MetricWindows {
        step_time: 0.02,
        steady: (0.08, 0.1),
    };
    let mpc = compute_metrics(&run_builtin("torque_step_2000rpm", &cfg), &windows, &cb, &vb).unwrap();

    let mut sc = ScenarioConfig::builtin("torque_step_2000rpm").unwrap();
    sc.controller = ControllerKind::BaselineFoc;
    let foc_trace = run_closed_loop(&sc, &cfg, &machine()).unwrap();
    let foc = compute_metrics(&foc_trace, &windows, &cb, &vb).unwrap();

    let reduction = (foc.mean_p_loss - mpc.mean_p_loss) / foc.mean_p_loss * 100.0;
    assert!(
        (2.0..=6.0).contains(&reduction),
        "loss reduction {reduction:.3} % outside [2, 6] % (mpc {:.2} W vs foc {:.2} W)",
        mpc.mean_p_loss,
        foc.mean_p_loss
    );
    println!(
        "criterion 07 loss reduction at 2000 rpm: PASS ({:.2} W vs {:.2} W baseline, −{reduction:.2} %)",
        mpc.mean_p_loss, foc.mean_p_loss
    );
}

#[test]
fn acceptance_08_d_axis_decoupling() {
    let cfg = config();
    let (cb, vb) = bounds();
    let p = machine();
    let limit = 0.05 * p.i_max;

    let windows_0 = MetricWindows {
        step_time: 0.01,
        steady: (0.045, 0.06),
    };
    let windows_2000 = MetricWindows {
        step_time: 0.02,
        steady: (0.08, 0.1),
    };

    let mpc_0 = compute_metrics(&run_builtin("torque_step_0rpm", &cfg), &windows_0, &cb, &vb).unwrap();
    let mpc_2000 =
        compute_metrics(&run_builtin("torque_step_2000rpm", &cfg), &windows_2000, &cb, &vb).unwrap();
    assert!(
        mpc_0.max_id_deviation <= limit,
        "standstill i_d deviation {:.3} A",
        mpc_0.max_id_deviation
    );
    assert!(
        mpc_2000.max_id_deviation <= limit,
        "2000 rpm i_d deviation {:.3} A",
        mpc_2000.max_id_deviation
    );

    // the baseline's cross-coupling excursion exists only where the coupling
    // terms are nonzero, i.e. at speed; at standstill both loops are exact
    let mut sc = ScenarioConfig::builtin("torque_step_2000rpm").unwrap();
    sc.controller = ControllerKind::BaselineFoc;
    let foc_trace = run_closed_loop(&sc, &cfg, &machine()).unwrap();
    let foc_2000 = compute_metrics(&foc_trace, &windows_2000, &cb, &vb).unwrap();
    assert!(
        foc_2000.max_id_deviation > mpc_2000.max_id_deviation,
        "baseline excursion {:.3} A not larger than predictive {:.3} A",
        foc_2000.max_id_deviation,
        mpc_2000.max_id_deviation
    );
    println!(
        "criterion 08 decoupling: PASS (predictive i_d deviation {:.3} / {:.3} A at 0 / 2000 rpm ≤ {limit:.2} A; \
         baseline {:.3} A at 2000 rpm)",
        mpc_0.max_id_deviation, mpc_2000.max_id_deviation, foc_2000.max_id_deviation
    );
}

#[test]
fn acceptance_09_field_weakening_monotone_in_speed() {
    let cfg = config();
    let mut steady_id = Vec::new();
    for rpm in [0.0, 1000.0, 2000.0] {
        let sc = ScenarioConfig {
            name: format!("hold_{rpm}"),
            mode: ScenarioMode::TorqueHold { speed_rpm: rpm },
            schedule: vec![(0.001, 2.0)],
            duration: 0.08,
            seed: 0,
            controller: ControllerKind::Mpc,
        };
        let trace = run_closed_loop(&sc, &cfg, &machine()).unwrap();
        let w = trace.window(0.06, 0.08);
        steady_id.push(w.iter().map(|r| r.i_d).sum::<f64>() / w.len() as f64);
    }
    assert!(
        steady_id[0] > steady_id[1] && steady_id[1] > steady_id[2],
        "steady i_d not strictly decreasing with speed: {steady_id:?}"
    );
    assert!(steady_id[0].abs() < 0.02, "standstill i_d should be ~0");
    println!(
        "criterion 09 i_d monotone in speed: PASS ({:.3} > {:.3} > {:.3} A at 0/1000/2000 rpm)",
        steady_id[0], steady_id[1], steady_id[2]
    );
}

#[test]
fn acceptance_10_horizon_degradation() {
    // Closed-loop cost of the standstill torque step over the 10 ms after
    // the step, long horizon vs short horizon.
    let base = config();
    let closed_loop_cost = |horizon: f64| {
        let mut cfg = base.clone();
        cfg.horizon = horizon;
        let trace = run_builtin("torque_step_0rpm", &cfg);
        trace
            .window(0.01, 0.02)
            .iter()
            .map(|r| {
                let e = r.tau - r.tau_ref.clamp(-cfg.tau_max, cfg.tau_max);
                e * e + cfg.loss_weight * r.p_loss
            })
            .sum::<f64>()
    };
    let long = closed_loop_cost(2e-3);
    let short = closed_loop_cost(0.5e-3);
    assert!(
        short > long,
        "criterion 10 horizon degradation: FAIL (short-horizon cost {short:.2} not above long-horizon {long:.2}; \
         the 0.5 ms horizon still covers the standstill setpoint change, so its slam-and-ring response \
         integrates less cost than the 2 ms horizon's paced approach)"
    );
    println!(
        "criterion 10 horizon degradation: PASS (closed-loop cost {short:.2} at T = 0.5 ms > {long:.2} at T = 2 ms)"
    );
}
