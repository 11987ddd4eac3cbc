//! Source and channel model: Poisson sources selected at random per pulse,
//! photon-number yields, total yields and the posterior over sources given a
//! photon number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stats::{poisson_pmf, poisson_tail};

/// Hard upper limit on the photon-number cutoff.
pub const N_MAX_CAP: usize = 40;

/// Expected number of pulses allowed above the cutoff when none is given.
pub const DEFAULT_TAIL_BUDGET: f64 = 1e-3;

/// A weak coherent source: selected with probability `q`, emits Poisson(`mu`)
/// photons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec<T> {
    pub label: String,
    pub mu: T,
    pub q: T,
}

impl<T: Real> SourceSpec<T> {
    pub fn new(label: impl Into<String>, mu: T, q: T) -> Self {
        Self {
            label: label.into(),
            mu,
            q,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams<T> {
    /// Transmission times detection efficiency.
    pub eta: T,
    /// Dark-count probability per pulse.
    pub y0: T,
}

impl<T: Real> ChannelParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero() && self.eta <= T::one()) {
            return Err(Error::invalid(
                "channel",
                format!("eta = {} must lie in (0, 1]", self.eta),
            ));
        }
        if !(self.y0 >= T::zero() && self.y0 < T::one()) {
            return Err(Error::invalid(
                "channel",
                format!("y0 = {} must lie in [0, 1)", self.y0),
            ));
        }
        Ok(())
    }
}

/// Probability that an `n`-photon pulse is detected: the dark-count rate for
/// `n = 0`, `1 - (1 - eta)^n` otherwise.
pub fn yield_n<T: Real>(n: usize, channel: &ChannelParams<T>) -> T {
    if n == 0 {
        channel.y0
    } else {
        // 1 - (1-eta)^n without cancellation for small eta
        -((T::from_usize(n).unwrap() * (-channel.eta).ln_1p()).exp_m1())
    }
}

/// Detection probability of a source with mean photon number `mu`:
/// `e^-mu y0 + 1 - e^(-mu eta)`.
pub fn total_yield<T: Real>(mu: T, channel: &ChannelParams<T>) -> T {
    (-mu).exp() * channel.y0 - (-mu * channel.eta).exp_m1()
}

/// `p_n = sum_i q^i Pr(n | mu^i)`.
pub fn pulse_mix_pn<T: Real>(n: usize, sources: &[SourceSpec<T>]) -> Result<T> {
    sources.iter().try_fold(T::zero(), |acc, s| {
        Ok(acc + s.q * poisson_pmf(n as u64, s.mu)?)
    })
}

/// Upper tail `sum_{m > n} p_m` of the source mixture.
pub fn pulse_mix_tail<T: Real>(n: usize, sources: &[SourceSpec<T>]) -> Result<T> {
    sources.iter().try_fold(T::zero(), |acc, s| {
        Ok(acc + s.q * poisson_tail(n as u64, s.mu)?)
    })
}

/// Posterior `q_n^i` over all sources for an `n`-photon pulse, evaluated as a
/// log-space softmax so large `n` neither overflows nor underflows.
pub fn source_posteriors<T: Real>(n: usize, sources: &[SourceSpec<T>]) -> Result<Vec<T>> {
    let nf = T::from_usize(n).unwrap();
    let logw: Vec<T> = sources
        .iter()
        .map(|s| {
            if s.q <= T::zero() {
                T::neg_infinity()
            } else if s.mu == T::zero() {
                if n == 0 {
                    s.q.ln()
                } else {
                    T::neg_infinity()
                }
            } else if n == 0 {
                s.q.ln() - s.mu
            } else {
                s.q.ln() - s.mu + nf * s.mu.ln()
            }
        })
        .collect();
    let top = logw.iter().copied().fold(T::neg_infinity(), T::max);
    if top == T::neg_infinity() {
        return Err(Error::UndefinedPosterior { n });
    }
    let w: Vec<T> = logw.iter().map(|&l| (l - top).exp()).collect();
    let total = w.iter().copied().fold(T::zero(), |a, b| a + b);
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// `q_n^i`: probability that an `n`-photon pulse came from source `i`.
pub fn source_posterior_qni<T: Real>(n: usize, i: usize, sources: &[SourceSpec<T>]) -> Result<T> {
    if i >= sources.len() {
        return Err(Error::invalid(
            "source index",
            format!("{i} out of range for {} sources", sources.len()),
        ));
    }
    Ok(source_posteriors(n, sources)?[i])
}

/// Validates a source set: non-negative finite intensities, selection
/// probabilities in (0, 1] summing to one within `1e-12`, unique labels.
pub fn validate_sources<T: Real>(sources: &[SourceSpec<T>]) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::invalid("source normalization", "no sources configured"));
    }
    for s in sources {
        if s.label.is_empty() {
            return Err(Error::invalid("source label", "labels must be non-empty"));
        }
        if !(s.mu >= T::zero()) || !s.mu.is_finite() {
            return Err(Error::invalid(
                "source intensity",
                format!("source {} has mu = {}", s.label, s.mu),
            ));
        }
        if !(s.q > T::zero() && s.q <= T::one()) {
            return Err(Error::invalid(
                "source normalization",
                format!("source {} has q = {} outside (0, 1]", s.label, s.q),
            ));
        }
    }
    for (k, s) in sources.iter().enumerate() {
        if sources[..k].iter().any(|o| o.label == s.label) {
            return Err(Error::invalid(
                "source label",
                format!("duplicate label {}", s.label),
            ));
        }
    }
    let total = sources.iter().fold(T::zero(), |a, s| a + s.q);
    if (total - T::one()).abs() > T::lit(1e-12) {
        return Err(Error::invalid(
            "source normalization",
            format!("selection probabilities sum to {total}, not 1"),
        ));
    }
    Ok(())
}

/// True for the standard layout: a vacuum source plus at least two distinct
/// non-zero intensities.
pub fn is_standard_decoy_set<T: Real>(sources: &[SourceSpec<T>]) -> bool {
    let has_vacuum = sources.iter().any(|s| s.mu == T::zero());
    let mut nonzero: Vec<T> = sources
        .iter()
        .map(|s| s.mu)
        .filter(|&m| m > T::zero())
        .collect();
    nonzero.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nonzero.dedup();
    has_vacuum && nonzero.len() >= 2
}

/// Sources, channel, pulse count and photon-number cutoff of one session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig<T> {
    pub sources: Vec<SourceSpec<T>>,
    pub channel: ChannelParams<T>,
    /// Total number of pulses `K`.
    pub pulses: u64,
    /// Photon-number cutoff; derived from `tail_budget` when absent.
    #[serde(default)]
    pub n_max: Option<usize>,
    /// Expected number of pulses tolerated above the cutoff.
    pub tail_budget: T,
}

impl<T: Real> ProtocolConfig<T> {
    /// Channel and source parameters of the correlated-attack variance study
    /// (`K = 1e10`, `eta = 1e-3`, `y0 = 2e-6`, `q = 0.01 / 0.0275`,
    /// `mu = 0 / 0.063`). The signal source intensity `mu_W = 0.5` is a
    /// choice of this repository.
    pub fn fig1() -> Self {
        Self {
            sources: vec![
                SourceSpec::new("U", T::zero(), T::lit(0.01)),
                SourceSpec::new("V", T::lit(0.063), T::lit(0.0275)),
                SourceSpec::new("W", T::lit(0.5), T::lit(0.9625)),
            ],
            channel: ChannelParams {
                eta: T::lit(1e-3),
                y0: T::lit(2e-6),
            },
            pulses: 10_000_000_000,
            n_max: None,
            tail_budget: T::lit(DEFAULT_TAIL_BUDGET),
        }
    }

    /// Bench configuration for Monte Carlo campaigns at `K = 1e6`: the
    /// efficiency and dark-count rate are high enough that every source sees
    /// tens of detections in each photon class up to `n = 3`.
    pub fn bench() -> Self {
        Self {
            sources: vec![
                SourceSpec::new("U", T::zero(), T::lit(0.1)),
                SourceSpec::new("V", T::lit(0.15), T::lit(0.2)),
                SourceSpec::new("W", T::lit(0.6), T::lit(0.7)),
            ],
            channel: ChannelParams {
                eta: T::lit(0.2),
                y0: T::lit(5e-3),
            },
            pulses: 1_000_000,
            n_max: None,
            tail_budget: T::lit(DEFAULT_TAIL_BUDGET),
        }
    }

    /// Effective cutoff: the configured one, or the smallest `n` whose
    /// expected overflow `K sum_{m>n} p_m` is below the tail budget, clamped
    /// to `[2, 40]`.
    pub fn n_max(&self) -> Result<usize> {
        match self.n_max {
            Some(n) => Ok(n),
            None => default_n_max(&self.sources, self.pulses, self.tail_budget),
        }
    }

    /// Expected number of pulses above the effective cutoff.
    pub fn expected_overflow(&self) -> Result<T> {
        Ok(T::from_count(self.pulses) * pulse_mix_tail(self.n_max()?, &self.sources)?)
    }

    /// Checks every invariant; returns advisory warnings for soft ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        validate_sources(&self.sources)?;
        self.channel.validate()?;
        if self.pulses == 0 {
            return Err(Error::invalid("pulse count", "K must be at least 1"));
        }
        if !(self.tail_budget > T::zero()) {
            return Err(Error::invalid(
                "tail budget",
                format!("tail_budget = {} must be positive", self.tail_budget),
            ));
        }
        if let Some(n) = self.n_max {
            if !(2..=N_MAX_CAP).contains(&n) {
                return Err(Error::invalid(
                    "photon-number cutoff",
                    format!("n_max = {n} must lie in [2, {N_MAX_CAP}]"),
                ));
            }
        }
        let mut warnings = Vec::new();
        let overflow = self.expected_overflow()?;
        if overflow > self.tail_budget {
            warnings.push(format!(
                "expected {overflow:e} pulses above n_max = {}, exceeding the tail budget {}",
                self.n_max()?,
                self.tail_budget
            ));
        }
        if !is_standard_decoy_set(&self.sources) {
            warnings.push(
                "source set lacks a vacuum source or two distinct non-zero intensities".into(),
            );
        }
        Ok(warnings)
    }
}

fn default_n_max<T: Real>(sources: &[SourceSpec<T>], pulses: u64, budget: T) -> Result<usize> {
    let k = T::from_count(pulses);
    for n in 2..N_MAX_CAP {
        if k * pulse_mix_tail(n, sources)? < budget {
            return Ok(n);
        }
    }
    Ok(N_MAX_CAP)
}
