use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixsteady::commands::{
    cmd_check, cmd_mms, cmd_solve, cmd_sweep, CmdError, SweepAxis, EXIT_CONFIG,
};
use mixsteady::config::load_config;
use mixsteady_core::grid::ConvectionScheme;

#[derive(Parser)]
#[command(
    name = "mixsteady",
    version,
    about = "Steady reacting-mixture solver: construction runs, sweeps, verification, and state checking"
)]
struct Cli {
    /// Reserved for randomized property tests; solves are deterministic and
    /// ignore it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full continuation and write fields plus reports.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One construction per axis value; emits a ledger CSV with slope summaries.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `delta` or `m`.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: PathBuf,
        /// Parallel independent runs (cold starts); 1 chains warm starts.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Manufactured-solution convergence study.
    Mms {
        /// thermal, species, flow, or coupled.
        #[arg(long)]
        case: String,
        /// Comma-separated grid cell counts; defaults per case.
        #[arg(long)]
        sizes: Option<String>,
        /// upwind or centered.
        #[arg(long, default_value = "upwind")]
        scheme: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute diagnostics for a saved state directory.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<(), (i32, String)> {
    let cli = Cli::parse();
    let fail = |e: CmdError| (e.exit_code(), e.to_string());
    match cli.command {
        Command::Solve { config, out } => {
            let cfg = load_config(&config).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            let report = cmd_solve(&cfg, &out).map_err(fail)?;
            let last = report.stages.last().expect("at least one stage");
            println!(
                "solve: {} stages, final update {:.3e}, g = {}, outputs in {}",
                report.stages.len(),
                last.final_update,
                last.g_val,
                out.display()
            );
            Ok(())
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
            jobs,
        } => {
            let cfg = load_config(&config).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            let axis: SweepAxis = axis.parse().map_err(fail)?;
            let values: Vec<f64> = values
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| (EXIT_CONFIG, format!("bad sweep values: {e}")))?;
            let summary = cmd_sweep(&cfg, axis, &values, &out, jobs).map_err(fail)?;
            if let Some(slope) = summary.mass_defect_slope {
                println!("sweep: mass-defect slope {slope:.3}");
            }
            if let Some(dec) = summary.xi_over_m_decreasing {
                println!("sweep: Xi/M strictly decreasing: {dec}");
            }
            if summary.rows.iter().any(|r| !r.ok) {
                println!("sweep: some rows failed; see ledger");
            }
            Ok(())
        }
        Command::Mms {
            case,
            sizes,
            scheme,
            out,
        } => {
            let scheme = match scheme.as_str() {
                "upwind" => ConvectionScheme::Upwind,
                "centered" => ConvectionScheme::Centered,
                other => return Err((EXIT_CONFIG, format!("unknown scheme `{other}`"))),
            };
            let sizes: Option<Vec<usize>> = match sizes {
                None => None,
                Some(text) => Some(
                    text.split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| (EXIT_CONFIG, format!("bad sizes: {e}")))?,
                ),
            };
            let table = cmd_mms(&case, sizes.as_deref(), scheme, &out).map_err(fail)?;
            println!(
                "mms {}/{}: observed order L2 = {:.3}, max = {:.3}",
                table.case, table.scheme, table.observed_order_l2, table.observed_order_max
            );
            Ok(())
        }
        Command::Check { config, state, out } => {
            let cfg = load_config(&config).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            let diag = cmd_check(&cfg, &state, &out).map_err(fail)?;
            println!(
                "check: sigma_min {:.3e}, mass defect {:.3e}, entropy residual {:.3e}",
                diag.sigma_min, diag.mass_defect_l2, diag.entropy_balance_residual
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
