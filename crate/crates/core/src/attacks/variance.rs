use serde::{Deserialize, Serialize};

use crate::channel::{
    pulse_mix_pn, source_posteriors, yield_n, ChannelParams, ProtocolConfig, SourceSpec,
};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Photon numbers summed over in the closed-form variance. Terms past this are
/// below `1e-30` relative for any mean photon number up to 1.
const SUM_LIMIT: usize = 60;

/// Closed-form spread of the per-source detection rates `D^i / K^i` under a
/// block attack of scale `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport<T> {
    pub tau: u64,
    pub pulses: u64,
    pub sources: Vec<SourceSpec<T>>,
    pub channel: ChannelParams<T>,
    /// Standard deviation of `D^i / K^i`, one per source.
    pub sigma: Vec<T>,
    /// Variance of `d_n^i`, indexed `[n][i]`.
    pub class_variance: Vec<Vec<T>>,
}

/// Variance of the `n`-photon detections attributed to source `i`:
/// `[(tau^2 - 1) q (1 - y) + (1 - q y p)] q y p K` with `q = q_n^i`,
/// `y = y_n`, `p = p_n`.
pub fn detection_variance<T: Real>(tau: u64, q: T, y: T, p: T, pulses: u64) -> T {
    let t2 = T::from_count(tau * tau);
    let qyp = q * y * p;
    ((t2 - T::one()) * q * (T::one() - y) + (T::one() - qyp)) * qyp * T::from_count(pulses)
}

pub fn analytic_sigma<T: Real>(config: &ProtocolConfig<T>, tau: u64) -> Result<VarianceReport<T>> {
    let (sources, channel, pulses) = (&config.sources, &config.channel, config.pulses);
    if tau == 0 {
        return Err(Error::invalid("attack", "tau must be at least 1"));
    }
    crate::channel::validate_sources(sources)?;
    channel.validate()?;
    let mut class_variance = Vec::with_capacity(SUM_LIMIT + 1);
    for n in 0..=SUM_LIMIT {
        let p = pulse_mix_pn(n, sources)?;
        let row = if p > T::zero() {
            let y = yield_n(n, channel);
            source_posteriors(n, sources)?
                .into_iter()
                .map(|q| detection_variance(tau, q, y, p, pulses))
                .collect()
        } else {
            vec![T::zero(); sources.len()]
        };
        class_variance.push(row);
    }
    let k = T::from_count(pulses);
    let sigma = sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let total = class_variance
                .iter()
                .fold(T::zero(), |acc, row| acc + row[i]);
            total.sqrt() / (s.q * k)
        })
        .collect();
    Ok(VarianceReport {
        tau,
        pulses,
        sources: sources.to_vec(),
        channel: *channel,
        sigma,
        class_variance,
    })
}
