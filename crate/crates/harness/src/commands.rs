//! Subcommand dispatch: applies overrides, runs one experiment and writes its
//! artifacts.

use std::path::{Path, PathBuf};

use decoy_core::attacks::simulate_session;
use decoy_core::estimator::estimate_session;
use decoy_core::{AttackKind, RngStream, SessionRecord, SolverOptions, SolverStatus};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::{
    coverage_c_grid, coverage_grid, coverage_rows, coverage_schema, posterior_rows,
    posterior_schema, posterior_table, sigma_rows, sigma_schema, soundness_campaign, sweep_tau,
    DarkCountSetup, SessionOutcome, DEFAULT_COVERAGE_TAUS, DEFAULT_POSTERIOR_TAUS,
};
use crate::table::{write_json, write_table, Cell, Column, Provenance};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Estimate,
    SweepTau,
    Coverage,
    Posterior,
    Soundness,
    ReproduceFig1,
    ReproduceFig2,
}

impl Command {
    /// Artifact name used when neither `--out` nor `output_path` is given.
    pub fn default_output(self) -> &'static str {
        match self {
            Command::Simulate => "session.json",
            Command::Estimate => "estimate.json",
            Command::SweepTau => "sweep_tau.csv",
            Command::Coverage => "coverage.csv",
            Command::Posterior => "posterior.csv",
            Command::Soundness => "soundness.json",
            Command::ReproduceFig1 => "fig1_sigma.csv",
            Command::ReproduceFig2 => "fig2",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub tau: Option<u64>,
    pub eps: Option<f64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Session file for `estimate`; a fresh session is simulated otherwise.
    pub session: Option<PathBuf>,
    /// Drop the `sum_n d_n <= D` constraint.
    pub no_total_cap: bool,
}

fn config_error(e: impl ToString) -> HarnessError {
    HarnessError::Config {
        path: "overrides".into(),
        message: e.to_string(),
    }
}

/// Folds the overrides that are part of the experiment into the config and
/// revalidates it. `--tau` sets the attack scale for session commands; an
/// attack without correlations becomes a block attack.
pub fn apply_overrides(mut config: ExperimentConfig, command: Command, o: &Overrides) -> Result<ExperimentConfig> {
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(trials) = o.trials {
        config.trials = trials;
    }
    if let Some(eps) = o.eps {
        config.eps_dsp = eps;
    }
    let session_command = matches!(command, Command::Simulate | Command::Estimate | Command::Soundness);
    if let (Some(tau), true) = (o.tau, session_command) {
        if tau > 1 && matches!(config.attack.kind, AttackKind::None | AttackKind::Iid) {
            config.attack.kind = AttackKind::BlockCorrelated;
        }
        config.attack.tau = tau;
    }
    if o.tau == Some(0) {
        return Err(config_error("--tau must be at least 1"));
    }
    config.validate().map_err(config_error)?;
    Ok(config)
}

fn output_path(command: Command, config: &ExperimentConfig, o: &Overrides, out_dir: &Path) -> PathBuf {
    o.out
        .clone()
        .or_else(|| config.output_path.clone())
        .unwrap_or_else(|| out_dir.join(command.default_output()))
}

fn solver_options(o: &Overrides) -> SolverOptions {
    SolverOptions {
        cap_total: !o.no_total_cap,
        ..SolverOptions::default()
    }
}

/// Runs one subcommand and returns the paths it wrote. `config` must not have
/// overrides applied yet.
pub fn run_command(command: Command, config: ExperimentConfig, o: &Overrides, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let config = apply_overrides(config, command, o)?;
    let prov = Provenance::new(config.seed, config.hash());
    let out = output_path(command, &config, o, out_dir);
    let workers = o.workers.unwrap_or(1);
    match command {
        Command::Simulate => {
            let record = simulate_session(&config.protocol, &config.attack, &mut RngStream::new(config.seed, 0))?;
            write_json(&record, &out, &prov)?;
            Ok(vec![out])
        }
        Command::Estimate => estimate(&config, o, &out, &prov),
        Command::SweepTau | Command::ReproduceFig1 => {
            let top = o.tau.unwrap_or(100);
            let taus: Vec<u64> = (1..=top).collect();
            let reports = sweep_tau(&config.protocol, &taus)?;
            write_table(&sigma_rows(&reports), &sigma_schema(&config.protocol), &out, &prov)?;
            Ok(vec![out])
        }
        Command::Coverage => {
            write_coverage(&config, o, &out, &prov)?;
            Ok(vec![out])
        }
        Command::Posterior => {
            write_posterior(&config, o, &out, &prov)?;
            Ok(vec![out])
        }
        Command::ReproduceFig2 => {
            let a = out.join("fig2a_coverage.csv");
            let b = out.join("fig2b_posterior.csv");
            write_coverage(&config, o, &a, &prov)?;
            write_posterior(&config, o, &b, &prov)?;
            Ok(vec![a, b])
        }
        Command::Soundness => {
            let (summary, sessions) = soundness_campaign(&config, workers, &solver_options(o))?;
            let table = sessions_path(&out);
            write_table(&session_rows(&sessions), &session_schema(), &table, &prov)?;
            write_json(&summary, &out, &prov)?;
            Ok(vec![out, table])
        }
    }
}

fn estimate(config: &ExperimentConfig, o: &Overrides, out: &Path, prov: &Provenance) -> Result<Vec<PathBuf>> {
    let record = match &o.session {
        Some(path) => load_session(path)?,
        None => simulate_session(&config.protocol, &config.attack, &mut RngStream::new(config.seed, 0))?,
    };
    let public = &record.public;
    if public.pulses != config.protocol.pulses || public.source_detections.len() != config.protocol.sources.len() {
        return Err(HarnessError::Config {
            path: o.session.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            message: "session does not match the configured protocol".into(),
        });
    }
    let result = estimate_session(public, &config.protocol, config.eps_dsp, &config.key_params, &solver_options(o))?;
    write_json(&result, out, prov)?;
    match result.solver_status {
        SolverStatus::Infeasible => Err(HarnessError::Infeasible(format!(
            "observed counts admit no detection vector; zero-key result written to {}",
            out.display()
        ))),
        _ => Ok(vec![out.to_path_buf()]),
    }
}

/// Reads a session written by `simulate`, with or without its provenance
/// envelope.
pub fn load_session(path: &Path) -> Result<SessionRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let bad = |e: serde_json::Error| HarnessError::Config {
        path: path.display().to_string(),
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    };
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    if let Some(inner) = value.get_mut("record") {
        value = inner.take();
    }
    let record: SessionRecord = serde_json::from_value(value).map_err(bad)?;
    record.check_accounting().map_err(|e| HarnessError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(record)
}

fn write_coverage(config: &ExperimentConfig, o: &Overrides, path: &Path, prov: &Provenance) -> Result<()> {
    let setup = DarkCountSetup::from_config(config)?;
    let taus: Vec<u64> = match o.tau {
        Some(t) => (1..=t).collect(),
        None => DEFAULT_COVERAGE_TAUS.to_vec(),
    };
    let points = coverage_grid(&setup, &taus, &coverage_c_grid())?;
    write_table(&coverage_rows(&points), &coverage_schema(), path, prov)
}

fn write_posterior(config: &ExperimentConfig, o: &Overrides, path: &Path, prov: &Provenance) -> Result<()> {
    let setup = DarkCountSetup::from_config(config)?;
    let mut taus = match o.tau {
        Some(t) => vec![1, t],
        None => DEFAULT_POSTERIOR_TAUS.to_vec(),
    };
    taus.dedup();
    let table = posterior_table(&setup, &taus)?;
    write_table(&posterior_rows(&table), &posterior_schema(&taus), path, prov)
}

fn sessions_path(summary: &Path) -> PathBuf {
    let stem = summary
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "soundness".into());
    summary.with_file_name(format!("{stem}_sessions.csv"))
}

fn session_schema() -> Vec<Column> {
    let mut cols = vec![Column::int("index")];
    for name in ["d0", "d1", "f0", "f1"] {
        cols.push(Column::int(name));
        cols.push(Column::float(format!("{name}_star")));
    }
    cols.extend([
        Column::float("key_length"),
        Column::text("status"),
        Column::int("violated"),
    ]);
    cols
}

fn session_rows(sessions: &[SessionOutcome]) -> Vec<Vec<Cell>> {
    sessions
        .iter()
        .map(|s| {
            let e = &s.estimate;
            let mut row = vec![Cell::Int(s.index as i64)];
            for (truth, bound) in [(s.d0, e.d0_star), (s.d1, e.d1_star), (s.f0, e.f0_star), (s.f1, e.f1_star)] {
                row.push(Cell::Int(truth as i64));
                row.push(Cell::Float(bound));
            }
            row.push(Cell::Float(e.key_length));
            row.push(Cell::Text(status_name(e.solver_status)));
            row.push(Cell::Int(s.violated() as i64));
            row
        })
        .collect()
}

fn status_name(status: SolverStatus) -> String {
    #[derive(Serialize)]
    struct Wrap(SolverStatus);
    serde_json::to_value(Wrap(status))
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}
