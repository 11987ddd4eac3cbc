use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use decoy_harness::{load_config, run_command, Command, ExperimentConfig, Overrides};

/// Decoy-state QKD experiments.
///
/// Exit status: 0 success, 2 configuration error, 3 infeasible estimate,
/// 4 runtime failure.
#[derive(Parser)]
#[command(name = "decoy", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Experiment config (JSON). Defaults to the built-in long-haul preset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Random seed; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Monte Carlo repetitions; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<u64>,

    /// Attack scale for session commands; largest scale for sweep-tau and
    /// coverage; compared scale for posterior.
    #[arg(long, global = true, value_name = "N")]
    tau: Option<u64>,

    /// Overall failure probability eps_dsp; overrides the config.
    #[arg(long, global = true, value_name = "FLOAT")]
    eps: Option<f64>,

    /// Output file (directory for reproduce-fig2).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads for Monte Carlo campaigns.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    workers: usize,

    /// Directory for outputs when --out is absent.
    #[arg(long, global = true, env = "DECOY_OUT_DIR", default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,

    /// Drop the constraint that photon-class detections sum to at most the
    /// observed total.
    #[arg(long, global = true)]
    no_total_cap: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one session and write its record (JSON).
    Simulate,
    /// Bound vacuum and single-photon counts and the key rate (JSON).
    Estimate {
        /// Session written by `simulate`; a fresh one is simulated if absent.
        #[arg(long, value_name = "PATH")]
        session: Option<PathBuf>,
    },
    /// Analytic per-source deviation of the detection rate for tau = 1..=N (CSV).
    SweepTau,
    /// Exact coverage of the independent-pulse interval over (tau, c) (CSV).
    Coverage,
    /// Dark-count posterior on a y0 grid for several tau (CSV).
    Posterior,
    /// Soundness campaign: summary (JSON) and per-session table (CSV).
    Soundness,
    /// Deviation curves for tau = 1..=100 (CSV).
    ReproduceFig1,
    /// Coverage grid and posterior curves into a directory (CSV).
    ReproduceFig2,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, session) = match cli.command {
        Cmd::Simulate => (Command::Simulate, None),
        Cmd::Estimate { session } => (Command::Estimate, session),
        Cmd::SweepTau => (Command::SweepTau, None),
        Cmd::Coverage => (Command::Coverage, None),
        Cmd::Posterior => (Command::Posterior, None),
        Cmd::Soundness => (Command::Soundness, None),
        Cmd::ReproduceFig1 => (Command::ReproduceFig1, None),
        Cmd::ReproduceFig2 => (Command::ReproduceFig2, None),
    };
    let overrides = Overrides {
        seed: cli.seed,
        trials: cli.trials,
        tau: cli.tau,
        eps: cli.eps,
        out: cli.out,
        workers: Some(cli.workers),
        session,
        no_total_cap: cli.no_total_cap,
    };
    let config = match &cli.config {
        Some(path) => match load_config(path) {
            Ok((config, warnings)) => {
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                config
            }
            Err(e) => return fail(e),
        },
        None => ExperimentConfig::fig1(),
    };
    match run_command(command, config, &overrides, &cli.out_dir) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn fail(e: decoy_harness::HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
