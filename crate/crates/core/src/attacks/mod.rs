//! Photon-number-splitting attacks.
//!
//! An attack is a law for the detection counts `d_n` given the photon-number
//! class sizes `k_n`. Eve sees photon numbers but never the source label, so
//! every law here acts on the class totals only.

mod session;
mod variance;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use session::{
    allocate_detections, sample_photon_counts, sift, simulate_session, split_by_source,
    HiddenCounts, PhotonCounts, PublicTranscript, SessionRecord,
};
pub use variance::{analytic_sigma, detection_variance, VarianceReport};

use crate::channel::{yield_n, ChannelParams};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Real;
use crate::stats::{binomial_sample, ln_binomial_pmf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// No eavesdropper: physical yields, independent pulses.
    None,
    /// Independent pulses with (possibly) modified yields.
    Iid,
    /// Detections decided jointly for blocks of `tau^2` same-`n` pulses.
    BlockCorrelated,
    /// Externally supplied law, see [`DetectionLaw`].
    Custom,
}

/// User-supplied joint law `Pr(d_0, d_1, ... | k_0, k_1, ...)`.
///
/// Receives the class sizes for `n = 0, 1, ...` (the last entry collects all
/// pulses above the cutoff) and must return one detection count per class,
/// each no larger than its class size.
pub trait DetectionLaw: Send + Sync {
    fn detections(&self, pulses: &[u64], rng: &mut RngStream) -> Vec<u64>;
}

impl<F> DetectionLaw for F
where
    F: Fn(&[u64], &mut RngStream) -> Vec<u64> + Send + Sync,
{
    fn detections(&self, pulses: &[u64], rng: &mut RngStream) -> Vec<u64> {
        self(pulses, rng)
    }
}

fn default_tau() -> u64 {
    1
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Correlation scale; blocks hold `tau^2` pulses.
    #[serde(default = "default_tau")]
    pub tau: u64,
    /// Eve's yields `y_n^E` where they differ from the physical channel.
    #[serde(default)]
    pub yields_override: BTreeMap<usize, f64>,
    #[serde(skip)]
    pub custom_law: Option<Arc<dyn DetectionLaw>>,
}

impl fmt::Debug for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AttackSpec")
            .field("kind", &self.kind)
            .field("tau", &self.tau)
            .field("yields_override", &self.yields_override)
            .field("custom_law", &self.custom_law.as_ref().map(|_| "<law>"))
            .finish()
    }
}

impl PartialEq for AttackSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.tau == other.tau
            && self.yields_override == other.yields_override
            && match (&self.custom_law, &other.custom_law) {
                (None, None) => true,
                (Some(a), Some(b)) => Arc::ptr_eq(a, b),
                _ => false,
            }
    }
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl AttackSpec {
    pub fn none() -> Self {
        Self {
            kind: AttackKind::None,
            tau: 1,
            yields_override: BTreeMap::new(),
            custom_law: None,
        }
    }

    pub fn iid(yields_override: BTreeMap<usize, f64>) -> Self {
        Self {
            kind: AttackKind::Iid,
            yields_override,
            ..Self::none()
        }
    }

    pub fn block(tau: u64) -> Self {
        Self {
            kind: AttackKind::BlockCorrelated,
            tau,
            ..Self::none()
        }
    }

    pub fn custom(law: Arc<dyn DetectionLaw>) -> Self {
        Self {
            kind: AttackKind::Custom,
            custom_law: Some(law),
            ..Self::none()
        }
    }

    pub fn with_yields(mut self, yields_override: BTreeMap<usize, f64>) -> Self {
        self.yields_override = yields_override;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::invalid("attack", "tau must be at least 1"));
        }
        if let Some((n, y)) = self
            .yields_override
            .iter()
            .find(|(_, y)| !(0.0..=1.0).contains(*y))
        {
            return Err(Error::invalid(
                "attack",
                format!("override y_{n} = {y} outside [0, 1]"),
            ));
        }
        match self.kind {
            AttackKind::None if !self.yields_override.is_empty() => Err(Error::invalid(
                "attack",
                "kind none takes the physical yields; use kind iid to override them",
            )),
            AttackKind::Custom if self.custom_law.is_none() => Err(Error::invalid(
                "attack",
                "kind custom needs a programmatically supplied detection law",
            )),
            _ => Ok(()),
        }
    }

    /// Eve's yield for photon class `n`.
    pub fn yield_for(&self, n: usize, channel: &ChannelParams<f64>) -> f64 {
        match self.kind {
            AttackKind::None => yield_n(n, channel),
            _ => self
                .yields_override
                .get(&n)
                .copied()
                .unwrap_or_else(|| yield_n(n, channel)),
        }
    }
}

/// Samples `d_n` for every photon class under the attack.
///
/// Class `n` of `pulses` is taken to hold `n`-photon pulses; callers that lump
/// everything above a cutoff into a final class get the yield of its smallest
/// photon number there.
pub fn attack_detections(
    attack: &AttackSpec,
    pulses: &[u64],
    channel: &ChannelParams<f64>,
    rng: &mut RngStream,
) -> Result<Vec<u64>> {
    attack.validate()?;
    let out = match attack.kind {
        AttackKind::None | AttackKind::Iid => pulses
            .iter()
            .enumerate()
            .map(|(n, &k)| binomial_sample(k, attack.yield_for(n, channel), rng))
            .collect::<Result<Vec<_>>>()?,
        AttackKind::BlockCorrelated => pulses
            .iter()
            .enumerate()
            .map(|(n, &k)| block_detections(k, attack.yield_for(n, channel), attack.tau, rng))
            .collect::<Result<Vec<_>>>()?,
        AttackKind::Custom => {
            let law = attack.custom_law.as_ref().expect("validated");
            law.detections(pulses, rng)
        }
    };
    if out.len() != pulses.len() {
        return Err(Error::AttackShape {
            expected: pulses.len(),
            got: out.len(),
        });
    }
    if let Some((n, (&d, &k))) = out
        .iter()
        .zip(pulses)
        .enumerate()
        .find(|(_, (d, k))| d > k)
    {
        return Err(Error::AttackContract {
            n,
            detections: d,
            pulses: k,
        });
    }
    Ok(out)
}

/// Block attack on one photon class: `k` pulses are cut into `k / tau^2`
/// blocks, each detected entirely with probability `y` or not at all; the
/// `k mod tau^2` leftover pulses are detected independently.
pub fn block_detections(k: u64, y: f64, tau: u64, rng: &mut RngStream) -> Result<u64> {
    let block = tau * tau;
    let blocks = k / block;
    let rest = k % block;
    Ok(block * binomial_sample(blocks, y, rng)? + binomial_sample(rest, y, rng)?)
}

/// Exact law of [`block_detections`] as a pmf over `0..=k`.
///
/// Cost is `O(k)` with `O(tau^2)` work per block count; meant for exhaustive
/// enumeration at small `k`.
pub fn block_detection_pmf(k: u64, y: f64, tau: u64) -> Vec<f64> {
    let block = tau * tau;
    let blocks = k / block;
    let rest = k % block;
    let rest_pmf: Vec<f64> = (0..=rest)
        .map(|r| ln_binomial_pmf(r, rest, y).exp())
        .collect();
    let mut pmf = vec![0.0; k as usize + 1];
    for b in 0..=blocks {
        let pb = ln_binomial_pmf(b, blocks, y).exp();
        if pb == 0.0 {
            continue;
        }
        for (r, pr) in rest_pmf.iter().enumerate() {
            pmf[(b * block) as usize + r] += pb * pr;
        }
    }
    pmf
}

/// Exact mean and variance of the dark-count block attack on `k_u` vacuum
/// pulses: `y0 k_u` and `y0 (1 - y0) (m tau^4 + r)` with `k_u = m tau^2 + r`,
/// which is `tau^2 y0 (1 - y0) k_u` when `tau^2` divides `k_u`.
pub fn dark_block_statistics<T: Real>(k_u: u64, y0: T, tau: u64) -> Result<(T, T)> {
    if !(y0 >= T::zero() && y0 <= T::one()) {
        return Err(Error::domain("y0", y0.to_f64().unwrap_or(f64::NAN), "[0, 1]"));
    }
    if tau == 0 {
        return Err(Error::invalid("attack", "tau must be at least 1"));
    }
    let block = tau * tau;
    if block > k_u {
        return Err(Error::DegenerateBlocking {
            block,
            pulses: k_u,
        });
    }
    let blocks = T::from_count(k_u / block);
    let rest = T::from_count(k_u % block);
    let b = T::from_count(block);
    let mean = y0 * T::from_count(k_u);
    let var = y0 * (T::one() - y0) * (blocks * b * b + rest);
    Ok((mean, var))
}
