//! Configuration parsing, scenario execution, and CSV/summary emission for
//! the predictive torque controller bench.
//!
//! Machine and controller settings come from flat `key = value` files plus
//! command-line overrides; scenarios are either built-in names or files in
//! the same format. Each run writes a fixed-schema CSV trace and a plain
//! text summary whose figures are re-derivable from the CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pmsm_mpc::constraints::{current_bounds, voltage_bounds, CurrentBounds, VoltageBounds};
use pmsm_mpc::controller::{ControllerConfig, VoltageBoundsMode};
use pmsm_mpc::harness::{
    compute_metrics, run_closed_loop, ControllerKind, MetricWindows, Metrics, ScenarioConfig,
    ScenarioMode, SimTrace,
};
use pmsm_mpc::machine::MachineParams;

/// Fixed CSV schema; the decimal separator is always a dot.
pub const CSV_HEADER: &str =
    "time_s,omega_rpm,tau_ref_Nm,tau_Nm,id_A,iq_A,ud_V,uq_V,ploss_W,lp_iters,status";

/// Everything one invocation needs.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Machine/controller parameter file; built-in defaults when absent.
    pub params: Option<PathBuf>,
    /// Built-in scenario name or a scenario file path.
    pub scenario: String,
    pub out_dir: PathBuf,
    /// `key=value` overrides applied after the parameter file.
    pub overrides: Vec<String>,
    pub emit_trace: bool,
    pub emit_summary: bool,
    pub compare_baseline: bool,
}

/// Runs one scenario (and optionally the baseline), writing the requested
/// artifacts. Returns the paths written.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>, String> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(path) = &cfg.params {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read parameter file {}: {e}", path.display()))?;
        pairs.extend(parse_kv(&text)?);
    }
    for item in &cfg.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| format!("override `{item}` is not of the form key=value"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }

    let (machine, controller) = build_configs(&pairs)?;
    machine.validate().map_err(|e| e.to_string())?;

    let scenario = load_scenario(&cfg.scenario)?;
    scenario.validate().map_err(|e| e.to_string())?;

    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| format!("cannot create {}: {e}", cfg.out_dir.display()))?;

    let cb = current_bounds(&machine);
    let vb =
        voltage_bounds(&machine, &cb, controller.omega_max).map_err(|e| e.to_string())?;
    let windows = default_windows(&scenario);

    let mut written = Vec::new();
    let mut summary = String::new();
    let _ = writeln!(summary, "scenario = {}", scenario.name);

    let mut run_one = |kind: ControllerKind, tag: &str| -> Result<(SimTrace, Metrics), String> {
        let mut sc = scenario.clone();
        sc.controller = kind;
        let trace = run_closed_loop(&sc, &controller, &machine).map_err(|e| e.to_string())?;
        let metrics = compute_metrics(&trace, &windows, &cb, &vb).map_err(|e| e.to_string())?;
        if cfg.emit_trace {
            let path = cfg.out_dir.join(format!("{}_{tag}.csv", scenario.name));
            fs::write(&path, render_csv(&trace))
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            written.push(path);
        }
        Ok((trace, metrics))
    };

    let (trace, metrics) = run_one(scenario.controller, "mpc")?;
    append_metrics(&mut summary, "mpc", &trace, &metrics, &controller);

    if cfg.compare_baseline {
        let (foc_trace, foc_metrics) = run_one(ControllerKind::BaselineFoc, "foc")?;
        append_metrics(&mut summary, "foc", &foc_trace, &foc_metrics, &controller);
        let reduction =
            (foc_metrics.mean_p_loss - metrics.mean_p_loss) / foc_metrics.mean_p_loss * 100.0;
        let _ = writeln!(summary, "steady_loss_reduction_pct = {reduction}");
    }

    if cfg.emit_summary {
        let path = cfg.out_dir.join(format!("{}_summary.txt", scenario.name));
        fs::write(&path, &summary).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        written.push(path);
    }
    print!("{summary}");
    Ok(written)
}

/// Steady window over the last quarter of the run; transient metrics are
/// anchored at the first schedule entry.
fn default_windows(sc: &ScenarioConfig) -> MetricWindows {
    MetricWindows {
        step_time: sc.schedule.first().map_or(0.0, |&(t, _)| t),
        steady: (0.75 * sc.duration, sc.duration),
    }
}

fn append_metrics(
    out: &mut String,
    tag: &str,
    trace: &SimTrace,
    m: &Metrics,
    cfg: &ControllerConfig,
) {
    let rows = trace.rows.len();
    let faults = trace.rows.iter().filter(|r| r.fault).count();
    let bound = 12 + 8 * cfg.collocation_points;
    let over_budget = trace.rows.iter().filter(|r| r.lp_iterations > bound).count();
    let mean_ns = trace.rows.iter().map(|r| r.solve_nanos).sum::<u64>() as f64 / rows as f64;
    let max_ns = trace.rows.iter().map(|r| r.solve_nanos).max().unwrap_or(0);
    let _ = writeln!(out, "[{tag}]");
    let _ = writeln!(out, "samples = {rows}");
    let _ = writeln!(out, "duration_s = {}", trace.duration());
    let _ = writeln!(out, "settled_torque_Nm = {}", m.settled_torque);
    let _ = writeln!(out, "settle_time_s = {}", m.settle_time);
    let _ = writeln!(out, "overshoot_pct = {}", m.overshoot_pct);
    let _ = writeln!(out, "max_id_deviation_A = {}", m.max_id_deviation);
    let _ = writeln!(out, "mean_steady_loss_W = {}", m.mean_p_loss);
    let _ = writeln!(out, "bound_violation_samples = {}", m.violation_count);
    let _ = writeln!(out, "solver_faults = {faults}");
    let _ = writeln!(out, "max_lp_iterations = {}", m.max_lp_iterations);
    let _ = writeln!(out, "lp_iteration_budget = {bound}");
    let _ = writeln!(out, "lp_budget_violations = {over_budget}");
    let _ = writeln!(out, "mean_solve_us = {}", mean_ns / 1e3);
    let _ = writeln!(out, "max_solve_us = {}", max_ns as f64 / 1e3);
}

/// Renders the fixed-schema CSV.
pub fn render_csv(trace: &SimTrace) -> String {
    let mut out = String::with_capacity(trace.rows.len() * 96);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.time,
            r.omega_rpm,
            r.tau_ref,
            r.tau,
            r.i_d,
            r.i_q,
            r.u_d,
            r.u_q,
            r.p_loss,
            r.lp_iterations,
            r.status
        );
    }
    out
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`, got `{line}`", idx + 1))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Applies machine keys first, derives the controller configuration from
/// the final machine, then applies controller keys. Unknown keys fail.
pub fn build_configs(
    pairs: &[(String, String)],
) -> Result<(MachineParams, ControllerConfig), String> {
    let mut machine = MachineParams::default();
    for (k, v) in pairs {
        if !apply_machine_key(&mut machine, k, v)? && !is_controller_key(k) {
            return Err(format!(
                "unknown override key `{k}` (machine keys: {MACHINE_KEYS:?}; controller keys: {CONTROLLER_KEYS:?})"
            ));
        }
    }
    let mut controller = ControllerConfig::for_machine(&machine);
    for (k, v) in pairs {
        apply_controller_key(&mut controller, k, v)?;
    }
    if controller.dt <= 0.0 || controller.dt >= controller.horizon {
        return Err(format!(
            "control period {} must lie in (0, horizon = {})",
            controller.dt, controller.horizon
        ));
    }
    Ok((machine, controller))
}

const MACHINE_KEYS: [&str; 12] = [
    "r",
    "l_d",
    "l_q",
    "k",
    "n_p",
    "k_fe",
    "i_max",
    "u_dc",
    "u_limit_fraction",
    "omega_rated",
    "j_rot",
    "tau_friction",
];

const CONTROLLER_KEYS: [&str; 10] = [
    "horizon",
    "dt",
    "loss_weight",
    "collocation_points",
    "k_p",
    "k_i",
    "tau_max",
    "omega_max",
    "lp_max_iter",
    "voltage_bounds_mode",
];

fn parse_f64(key: &str, v: &str) -> Result<f64, String> {
    v.parse::<f64>()
        .map_err(|_| format!("key `{key}`: `{v}` is not a number"))
}

fn apply_machine_key(m: &mut MachineParams, key: &str, v: &str) -> Result<bool, String> {
    match key {
        "r" => m.r = parse_f64(key, v)?,
        "l_d" => m.l_d = parse_f64(key, v)?,
        "l_q" => m.l_q = parse_f64(key, v)?,
        "k" => m.k = parse_f64(key, v)?,
        "n_p" => {
            m.n_p = v
                .parse::<u32>()
                .map_err(|_| format!("key `n_p`: `{v}` is not a positive integer"))?
        }
        "k_fe" => m.k_fe = parse_f64(key, v)?,
        "i_max" => m.i_max = parse_f64(key, v)?,
        "u_dc" => m.u_dc = parse_f64(key, v)?,
        "u_limit_fraction" => m.u_limit_fraction = parse_f64(key, v)?,
        "omega_rated" => m.omega_rated = parse_f64(key, v)?,
        "j_rot" => m.j_rot = parse_f64(key, v)?,
        "tau_friction" => m.tau_friction = parse_f64(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn is_controller_key(key: &str) -> bool {
    CONTROLLER_KEYS.contains(&key)
}

fn apply_controller_key(c: &mut ControllerConfig, key: &str, v: &str) -> Result<(), String> {
    match key {
        "horizon" => c.horizon = parse_f64(key, v)?,
        "dt" => c.dt = parse_f64(key, v)?,
        "loss_weight" => c.loss_weight = parse_f64(key, v)?,
        "collocation_points" => {
            c.collocation_points = v
                .parse::<usize>()
                .map_err(|_| format!("key `collocation_points`: `{v}` is not an integer"))?
        }
        "k_p" => c.pi.k_p = parse_f64(key, v)?,
        "k_i" => c.pi.k_i = parse_f64(key, v)?,
        "tau_max" => c.tau_max = parse_f64(key, v)?,
        "omega_max" => c.omega_max = parse_f64(key, v)?,
        "lp_max_iter" => {
            c.lp_max_iter = v
                .parse::<usize>()
                .map_err(|_| format!("key `lp_max_iter`: `{v}` is not an integer"))?
        }
        "voltage_bounds_mode" => {
            c.voltage_bounds_mode = match v {
                "fixed" => VoltageBoundsMode::FixedAtMax,
                "per_sample" => VoltageBoundsMode::PerSample,
                _ => {
                    return Err(format!(
                        "key `voltage_bounds_mode`: `{v}` is neither `fixed` nor `per_sample`"
                    ))
                }
            }
        }
        _ => {} // machine keys were consumed earlier
    }
    Ok(())
}

/// Resolves a built-in scenario name or loads a scenario file.
pub fn load_scenario(spec: &str) -> Result<ScenarioConfig, String> {
    if let Some(sc) = ScenarioConfig::builtin(spec) {
        return Ok(sc);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(format!(
            "`{spec}` is neither a built-in scenario ({:?}) nor a file",
            ScenarioConfig::BUILTIN_NAMES
        ));
    }
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_scenario(&text, path)
}

fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioConfig, String> {
    let mut name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario")
        .to_string();
    let mut mode_str = String::from("torque");
    let mut held_rpm = 0.0;
    let mut duration = 0.0;
    let mut schedule = Vec::new();
    let mut controller = ControllerKind::Mpc;
    let mut seed = 0u64;

    for (k, v) in parse_kv(text)? {
        match k.as_str() {
            "name" => name = v,
            "mode" => mode_str = v,
            "held_speed_rpm" => held_rpm = parse_f64("held_speed_rpm", &v)?,
            "duration" => duration = parse_f64("duration", &v)?,
            "seed" => {
                seed = v
                    .parse::<u64>()
                    .map_err(|_| format!("key `seed`: `{v}` is not an integer"))?
            }
            "controller" => {
                controller = match v.as_str() {
                    "mpc" => ControllerKind::Mpc,
                    "foc" => ControllerKind::BaselineFoc,
                    _ => return Err(format!("key `controller`: `{v}` is neither mpc nor foc")),
                }
            }
            "schedule" => {
                for entry in v.split(',') {
                    let (t, val) = entry
                        .trim()
                        .split_once(':')
                        .ok_or_else(|| format!("schedule entry `{entry}` is not time:value"))?;
                    schedule.push((parse_f64("schedule", t.trim())?, parse_f64("schedule", val.trim())?));
                }
            }
            other => return Err(format!("unknown scenario key `{other}`")),
        }
    }

    let mode = match mode_str.as_str() {
        "speed" => ScenarioMode::SpeedControl,
        "torque" => ScenarioMode::TorqueHold {
            speed_rpm: held_rpm,
        },
        other => return Err(format!("key `mode`: `{other}` is neither speed nor torque")),
    };
    Ok(ScenarioConfig {
        name,
        mode,
        schedule,
        duration,
        seed,
        controller,
    })
}

/// Exposed for tests: the current and voltage boxes a run used.
pub fn bounds_for(machine: &MachineParams, cfg: &ControllerConfig) -> (CurrentBounds, VoltageBounds) {
    let cb = current_bounds(machine);
    let vb = voltage_bounds(machine, &cb, cfg.omega_max).expect("valid configuration");
    (cb, vb)
}
