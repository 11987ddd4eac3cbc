//! Experiment drivers behind the subcommands. Every function is a pure
//! function of its arguments; Monte Carlo sessions use stream `t` of the
//! configured seed, so results do not depend on the worker count.

use decoy_core::attacks::{analytic_sigma, simulate_session};
use decoy_core::estimator::{
    bayes_dark_posterior, coverage_probability, estimate_session, grid_moments,
    iid_interval_contains, nominal_coverage,
};
use decoy_core::{
    AttackSpec, EstimationResult, ProtocolConfig, RngStream, SessionRecord, SolverOptions,
    SolverStatus, VarianceReport,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::table::{Cell, Column};

/// Interval multiplier for the independent-pulse coverage check.
pub const IID_C: f64 = 2.0;

pub const DEFAULT_COVERAGE_TAUS: [u64; 7] = [1, 2, 5, 10, 20, 50, 100];
pub const DEFAULT_POSTERIOR_TAUS: [u64; 4] = [1, 2, 5, 10];
pub const POSTERIOR_GRID_POINTS: usize = 4001;

/// Runs `f(t)` for `t in 0..trials` on `workers` threads, in index order.
pub fn par_trials<T, F>(trials: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    pool.install(|| (0..trials).into_par_iter().map(&f).collect())
}

pub fn sweep_tau(config: &ProtocolConfig, taus: &[u64]) -> Result<Vec<VarianceReport>> {
    Ok(taus
        .iter()
        .map(|&tau| analytic_sigma(config, tau))
        .collect::<decoy_core::Result<_>>()?)
}

pub fn sigma_schema(config: &ProtocolConfig) -> Vec<Column> {
    std::iter::once(Column::int("tau"))
        .chain(config.sources.iter().map(|s| Column::float(format!("sigma_{}", s.label))))
        .collect()
}

pub fn sigma_rows(reports: &[VarianceReport]) -> Vec<Vec<Cell>> {
    reports
        .iter()
        .map(|r| {
            std::iter::once(Cell::Int(r.tau as i64))
                .chain(r.sigma.iter().map(|&s| Cell::Float(s)))
                .collect()
        })
        .collect()
}

/// Vacuum pulses and detections a dark-count experiment starts from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarkCountSetup {
    pub pulses: u64,
    pub detections: u64,
    pub y0: f64,
}

impl DarkCountSetup {
    /// Expected vacuum-source pulse count `q_U K` and its expected dark
    /// detections, both rounded.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let u = &config.protocol.sources[config.vacuum_source()?];
        let pulses = (u.q * config.protocol.pulses as f64).round() as u64;
        let y0 = config.protocol.channel.y0;
        Ok(Self {
            pulses,
            detections: (y0 * pulses as f64).round() as u64,
            y0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveragePoint {
    pub tau: u64,
    pub c: f64,
    pub coverage: f64,
    pub nominal: f64,
}

pub fn coverage_c_grid() -> Vec<f64> {
    (1..=10).map(|j| 0.5 * j as f64).collect()
}

/// Exact coverage of the independent-pulse interval on a `(tau, c)` grid.
/// Scales whose blocks exceed the pulse count are skipped.
pub fn coverage_grid(setup: &DarkCountSetup, taus: &[u64], cs: &[f64]) -> Result<Vec<CoveragePoint>> {
    let mut out = Vec::new();
    for &tau in taus.iter().filter(|&&t| t * t <= setup.pulses) {
        for &c in cs {
            out.push(CoveragePoint {
                tau,
                c,
                coverage: coverage_probability(setup.pulses, setup.y0, tau, c)?,
                nominal: nominal_coverage(c),
            });
        }
    }
    Ok(out)
}

pub fn coverage_schema() -> Vec<Column> {
    vec![
        Column::int("tau"),
        Column::float("c"),
        Column::float("coverage"),
        Column::float("nominal"),
    ]
}

pub fn coverage_rows(points: &[CoveragePoint]) -> Vec<Vec<Cell>> {
    points
        .iter()
        .map(|p| {
            vec![
                Cell::Int(p.tau as i64),
                Cell::Float(p.c),
                Cell::Float(p.coverage),
                Cell::Float(p.nominal),
            ]
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTable {
    pub taus: Vec<u64>,
    pub grid: Vec<f64>,
    /// One normalized posterior per scale.
    pub weights: Vec<Vec<f64>>,
}

impl PosteriorTable {
    pub fn moments(&self) -> Vec<(f64, f64)> {
        self.weights.iter().map(|w| grid_moments(&self.grid, w)).collect()
    }
}

/// Dark-count posteriors for each scale on a common grid wide enough for the
/// broadest of them.
pub fn posterior_table(setup: &DarkCountSetup, taus: &[u64]) -> Result<PosteriorTable> {
    let widest = taus.iter().copied().max().unwrap_or(1) as f64;
    let k = setup.pulses.max(1) as f64;
    let mean = setup.detections as f64 / k;
    let spread = widest * (mean.max(1.0 / k) * (1.0 - mean).max(0.0) / k).sqrt();
    let lo = (mean - 8.0 * spread).max(0.0);
    let hi = (mean + 8.0 * spread).min(1.0);
    let n = POSTERIOR_GRID_POINTS - 1;
    let grid: Vec<f64> = (0..=n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect();
    let weights = taus
        .iter()
        .map(|&tau| bayes_dark_posterior(setup.detections, setup.pulses, tau, &grid))
        .collect::<decoy_core::Result<_>>()?;
    Ok(PosteriorTable {
        taus: taus.to_vec(),
        grid,
        weights,
    })
}

pub fn posterior_schema(taus: &[u64]) -> Vec<Column> {
    std::iter::once(Column::float("y0"))
        .chain(taus.iter().map(|t| Column::float(format!("tau_{t}"))))
        .collect()
}

pub fn posterior_rows(table: &PosteriorTable) -> Vec<Vec<Cell>> {
    table
        .grid
        .iter()
        .enumerate()
        .map(|(j, &y)| {
            std::iter::once(Cell::Float(y))
                .chain(table.weights.iter().map(|w| Cell::Float(w[j])))
                .collect()
        })
        .collect()
}

/// One soundness trial: the estimate next to the hidden counts it bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionOutcome {
    pub index: u64,
    pub d0: u64,
    pub d1: u64,
    pub f0: u64,
    pub f1: u64,
    pub estimate: EstimationResult,
    /// Which of `d0*, d1*, f0*, f1*` exceed their true counts.
    pub exceeded: [bool; 4],
    /// Per source, whether the independent-pulse interval at [`IID_C`]
    /// contains the observed detection rate.
    pub iid_covered: Vec<bool>,
}

impl SessionOutcome {
    pub fn violated(&self) -> bool {
        self.exceeded.iter().any(|&e| e)
    }
}

pub fn run_session(config: &ExperimentConfig, index: u64, options: &SolverOptions) -> Result<(SessionRecord, SessionOutcome)> {
    let protocol = &config.protocol;
    let record = simulate_session(protocol, &config.attack, &mut RngStream::new(config.seed, index))?;
    let estimate = estimate_session(&record.public, protocol, config.eps_dsp, &config.key_params, options)?;
    let h = &record.hidden;
    let truth = [
        h.detections_by_class[0],
        h.detections_by_class[1],
        h.sifted_by_class[0],
        h.sifted_by_class[1],
    ];
    let bounds = [estimate.d0_star, estimate.d1_star, estimate.f0_star, estimate.f1_star];
    let mut exceeded = [false; 4];
    for j in 0..4 {
        exceeded[j] = bounds[j] > truth[j] as f64;
    }
    let iid_covered = iid_interval_contains(&record.public, &protocol.sources, &protocol.channel, IID_C);
    let outcome = SessionOutcome {
        index,
        d0: truth[0],
        d1: truth[1],
        f0: truth[2],
        f1: truth[3],
        estimate,
        exceeded,
        iid_covered,
    };
    Ok((record, outcome))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoundnessSummary {
    pub attack: AttackSpec,
    pub trials: u64,
    pub eps_dsp: f64,
    pub violations: u64,
    pub violation_rate: f64,
    /// Exceedances of `d0*, d1*, f0*, f1*` separately.
    pub exceedances: [u64; 4],
    pub non_optimal: u64,
    pub mean_key_length: f64,
    pub mean_d1_ratio: f64,
    pub iid_c: f64,
    pub iid_nominal_coverage: f64,
    pub iid_coverage: Vec<f64>,
    /// Fraction of sessions where every source's interval covers.
    pub iid_joint_coverage: f64,
    pub sessions_with_warnings: u64,
}

pub fn soundness_campaign(config: &ExperimentConfig, workers: usize, options: &SolverOptions) -> Result<(SoundnessSummary, Vec<SessionOutcome>)> {
    let runs = par_trials(config.trials, workers, |t| {
        let (record, outcome) = run_session(config, t, options)?;
        Ok((!record.warnings.is_empty(), outcome))
    })?;
    let n = config.trials as f64;
    let sources = config.protocol.sources.len();
    let mut exceedances = [0u64; 4];
    let mut violations = 0;
    let mut non_optimal = 0;
    let mut key = 0.0;
    let mut ratio = 0.0;
    let mut covered = vec![0u64; sources];
    let mut joint = 0u64;
    let mut warned = 0;
    for (w, o) in &runs {
        warned += *w as u64;
        violations += o.violated() as u64;
        for j in 0..4 {
            exceedances[j] += o.exceeded[j] as u64;
        }
        non_optimal += (o.estimate.solver_status != SolverStatus::Optimal) as u64;
        key += o.estimate.key_length;
        if o.d1 > 0 {
            ratio += o.estimate.d1_star / o.d1 as f64;
        }
        for (i, &c) in o.iid_covered.iter().enumerate() {
            covered[i] += c as u64;
        }
        joint += o.iid_covered.iter().all(|&c| c) as u64;
    }
    let summary = SoundnessSummary {
        attack: config.attack.clone(),
        trials: config.trials,
        eps_dsp: config.eps_dsp,
        violations,
        violation_rate: violations as f64 / n,
        exceedances,
        non_optimal,
        mean_key_length: key / n,
        mean_d1_ratio: ratio / n,
        iid_c: IID_C,
        iid_nominal_coverage: nominal_coverage(IID_C),
        iid_coverage: covered.iter().map(|&c| c as f64 / n).collect(),
        iid_joint_coverage: joint as f64 / n,
        sessions_with_warnings: warned,
    };
    Ok((summary, runs.into_iter().map(|(_, o)| o).collect()))
}

/// Sample against analytic variance of one `d_n^i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceCheck {
    pub tau: u64,
    pub n: usize,
    pub source: usize,
    pub empirical: f64,
    pub analytic: f64,
}

impl VarianceCheck {
    /// Relative error; zero when both variances vanish.
    pub fn relative_error(&self) -> f64 {
        if self.analytic == 0.0 {
            if self.empirical == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            (self.empirical - self.analytic).abs() / self.analytic
        }
    }
}

/// Simulates `trials` sessions under a block attack of scale `tau` and
/// compares the sample variance of `d_n^i` for `n <= n_top` with the analytic
/// law.
pub fn variance_campaign(
    protocol: &ProtocolConfig,
    tau: u64,
    n_top: usize,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<VarianceCheck>> {
    let attack = AttackSpec::block(tau);
    let samples = par_trials(trials, workers, |t| {
        let s = simulate_session(protocol, &attack, &mut RngStream::new(seed, t))?;
        Ok(s.hidden.detections_by_class_source)
    })?;
    let report = analytic_sigma(protocol, tau)?;
    let sources = protocol.sources.len();
    let top = n_top.min(report.class_variance.len() - 1);
    let mut out = Vec::new();
    for n in 0..=top {
        for i in 0..sources {
            let xs: Vec<f64> = samples.iter().map(|s| s[n][i] as f64).collect();
            let m = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / m;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
            out.push(VarianceCheck {
                tau,
                n,
                source: i,
                empirical: var,
                analytic: report.class_variance[n][i],
            });
        }
    }
    Ok(out)
}
