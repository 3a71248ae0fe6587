use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use saddleprox::planner::PlannerOptions;
use saddleprox::RateMode;
use saddleprox_cli::commands::{self, PlanArgs, RateArgs, SolveOverrides};
use saddleprox_cli::RunConfig;

#[derive(Parser)]
#[command(name = "saddleprox", version, about = "Plan, run and check saddle-point solver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan constant step parameters and print every hypothesis margin.
    Plan {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        nu: f64,
        #[arg(long = "normk")]
        norm_k: f64,
        /// iterate-k, iterate-k2, value-k or value-k2
        #[arg(long, default_value = "iterate-k")]
        mode: RateMode,
        /// Starting multiple of min(1/mu, 1/nu, 1/|K|) for tau = sigma.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Plan without dual extrapolation.
        #[arg(long)]
        zero_beta: bool,
        /// Write the plan report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the solver from a JSON config and write the trace.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSV path (overrides outputs.trace).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the planner mode of the config.
        #[arg(long)]
        mode: Option<RateMode>,
        /// Relative tolerance of the bound checks.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Replay a stored trace against its plan and instance.
    Check {
        /// JSON trace with full iterates.
        trace: PathBuf,
        /// Plan report JSON.
        plan: PathBuf,
        /// Problem JSON.
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Tolerance for certifying a nonsmooth reference point.
        #[arg(long, default_value_t = 1e-8)]
        certificate_tol: f64,
        /// Write the summary as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a linear rate to a trace column.
    Rate {
        /// Trace CSV.
        trace: PathBuf,
        /// Column name; `dist2` sums dist2_x and dist2_y.
        #[arg(long, default_value = "dist2")]
        column: String,
        /// Inclusive START:END; default drops the first 10%.
        #[arg(long)]
        window: Option<String>,
        /// Values at or below this fraction of the series maximum count as zero.
        #[arg(long, default_value_t = 1e-20)]
        floor: f64,
        /// Allowed excess of the fitted rate over the planned xi.
        #[arg(long, default_value_t = 0.02)]
        max_excess: f64,
        /// Planned rate, when the trace header lacks one.
        #[arg(long)]
        xi: Option<f64>,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let ok = match cli.command {
        Command::Plan {
            mu,
            nu,
            norm_k,
            mode,
            scale,
            zero_beta,
            out,
        } => {
            let args = PlanArgs {
                mu,
                nu,
                norm_k,
                mode,
                options: PlannerOptions {
                    initial_scale: scale,
                    zero_beta,
                    ..Default::default()
                },
            };
            commands::cmd_plan(&args, out.as_deref(), &mut w)?
        }
        Command::Solve {
            config,
            out,
            seed,
            mode,
            tol,
        } => {
            let cfg = RunConfig::load(&config)?;
            let ov = SolveOverrides { seed, mode, out, tol };
            commands::cmd_solve(&cfg, &ov, &mut w)?.report.passed
        }
        Command::Check {
            trace,
            plan,
            instance,
            tol,
            certificate_tol,
            out,
        } => commands::cmd_check(&trace, &plan, &instance, tol, certificate_tol, out.as_deref(), &mut w)?.passed,
        Command::Rate {
            trace,
            column,
            window,
            floor,
            max_excess,
            xi,
        } => {
            let window = window.as_deref().map(commands::parse_window).transpose().context("--window")?;
            let args = RateArgs {
                column,
                window,
                floor,
                max_excess,
                xi,
            };
            commands::cmd_rate(&trace, &args, &mut w)?.1
        }
    };
    w.flush()?;
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
