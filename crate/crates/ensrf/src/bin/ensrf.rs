use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ensrf::cli::{
    cmd_bounds_fuzz, cmd_converge, cmd_kf_run, cmd_srf_run, exit_code_for, BoundsFuzzOpts,
    CommonOpts,
};

/// Kalman and square-root ensemble filtering experiments for
/// linear-Gaussian systems.
#[derive(Parser)]
#[command(name = "ensrf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/JSON results and the manifest
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config file's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap; results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn opts(&self) -> CommonOpts {
        CommonOpts {
            out_dir: self.out.clone(),
            seed: self.seed,
            threads: self.threads,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact Kalman filter on a configured problem
    KfRun {
        #[command(flatten)]
        common: Common,
    },
    /// Run the square-root ensemble filter on a configured problem
    SrfRun {
        #[command(flatten)]
        common: Common,
        /// Also write every ensemble member per step
        #[arg(long)]
        dump_ensemble: bool,
    },
    /// Ensemble-vs-exact convergence experiment with log-log rate fits
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// Randomized checks of the gain/analysis operator inequalities
    BoundsFuzz {
        /// State dimension of the random inputs
        #[arg(long, default_value_t = 5)]
        state_dim: usize,
        /// Observation dimension of the random inputs
        #[arg(long, default_value_t = 5)]
        obs_dim: usize,
        /// Number of randomized trials
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Master seed for the campaign
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the JSON report and manifest
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker thread cap; results do not depend on it
        #[arg(long)]
        threads: Option<usize>,
        /// Test hook: plant one failing report to exercise the failure path
        #[arg(long, hide = true)]
        inject_violation: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::KfRun { common } => cmd_kf_run(&common.config, &common.opts()).map(|_| 0),
        Command::SrfRun {
            common,
            dump_ensemble,
        } => cmd_srf_run(&common.config, &common.opts(), *dump_ensemble).map(|_| 0),
        Command::Converge { common } => cmd_converge(&common.config, &common.opts()).map(|_| 0),
        Command::BoundsFuzz {
            state_dim,
            obs_dim,
            trials,
            seed,
            out,
            threads,
            inject_violation,
        } => {
            let fuzz = BoundsFuzzOpts {
                state_dim: *state_dim,
                obs_dim: *obs_dim,
                trials: *trials,
                seed: *seed,
                inject_violation: *inject_violation,
            };
            let common = CommonOpts {
                out_dir: out.clone(),
                seed: Some(*seed),
                threads: *threads,
            };
            cmd_bounds_fuzz(&fuzz, &common).map(|(_, summary)| {
                if summary.passed() {
                    0
                } else {
                    let worst = summary
                        .violations
                        .iter()
                        .map(|v| format!("{} ({})", v.check, v.inputs_digest))
                        .collect::<Vec<_>>()
                        .join(", ");
                    eprintln!("bounds-fuzz: {} violation(s): {worst}", summary.violations.len());
                    1
                }
            })
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("ensrf: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
