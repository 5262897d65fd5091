//! Workbench front end: every figure and constant of the analysis is
//! reproducible from one subcommand plus a TOML configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use starfid_core::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "starfid",
    version,
    about = "Classical vs GHZ-enhanced spin magnetometry workbench"
)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides the configured one).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed for every pseudo-random draw.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for sweep and Monte-Carlo; results do not depend
    /// on this.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write ideal and noisy readout traces for both strategies.
    Signal,
    /// Report closed-form and Fisher-matrix precision bounds.
    Crb,
    /// Cross-check the density-matrix oracle against the signal model.
    OracleCheck,
    /// Verify bound attainment of the fit by repeated noisy trials.
    Montecarlo,
    /// Optimize the classical slice time.
    OptimizeStd,
    /// Optimize the entangled slice and wait times.
    OptimizeGhz,
    /// Tabulate ratio and sensitivity optima over the (K, p) grid.
    Sweep,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_)
        | Error::SystemTooLarge { .. }
        | Error::UnsupportedDecoherence { .. }
        | Error::PhaseAmbiguity(_) => 1,
        Error::SingularFisher(_) | Error::NonConvergence(_) => 2,
        Error::Io(_) => 3,
    }
}

fn run(cli: Cli) -> starfid_core::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_flags(cli.out, cli.seed, cli.jobs);
    if cfg.run.jobs > 0 {
        // A second initialization in the same process is harmless; the
        // pool size only affects wall time, never results.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.jobs)
            .build_global();
    }
    match cli.command {
        Command::Signal => commands::cmd_signal(&cfg),
        Command::Crb => commands::cmd_crb(&cfg),
        Command::OracleCheck => commands::cmd_oracle_check(&cfg),
        Command::Montecarlo => commands::cmd_montecarlo(&cfg),
        Command::OptimizeStd => commands::cmd_optimize_std(&cfg),
        Command::OptimizeGhz => commands::cmd_optimize_ghz(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version displays are successes, not usage errors.
            let is_display = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_display {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
