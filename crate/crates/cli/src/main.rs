use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pmsm_mpc_cli::{run, RunConfig};

/// Closed-loop bench for the predictive PMSM torque controller.
///
/// Runs a named or file-defined scenario against the simulated machine and
/// writes a CSV trace plus a plain-text summary.
#[derive(Parser, Debug)]
#[command(name = "pmsm-mpc", version, about)]
struct Args {
    /// Built-in scenario name (speed_steps, torque_step_0rpm,
    /// torque_step_2000rpm, torque_step_2400rpm) or a scenario file.
    #[arg(long)]
    scenario: String,

    /// Machine/controller parameter file (`key = value` lines); built-in
    /// defaults when omitted.
    #[arg(long)]
    params: Option<PathBuf>,

    /// Output directory for traces and summaries.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,

    /// Override any parameter or controller key, e.g. --set u_dc=400.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Write the per-sample CSV trace.
    #[arg(long)]
    emit_trace: bool,

    /// Write the metric summary file (always printed to stdout).
    #[arg(long)]
    emit_summary: bool,

    /// Also run the decoupled-PI baseline and report the loss delta.
    #[arg(long)]
    compare_baseline: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = RunConfig {
        params: args.params,
        scenario: args.scenario,
        out_dir: args.out_dir,
        overrides: args.overrides,
        emit_trace: args.emit_trace,
        emit_summary: args.emit_summary,
        compare_baseline: args.compare_baseline,
    };
    match run(&cfg) {
        Ok(written) => {
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
