use crate::attacks::PublicTranscript;
use crate::channel::{total_yield, ChannelParams, SourceSpec};
use crate::error::{Error, Result};
use crate::stats::ln_binomial_pmf;

/// Exact probability that the vacuum detection count lands inside the
/// independent-pulse interval `y0 K +- c sqrt(y0 (1 - y0) K)` when the
/// detections are in fact decided in blocks of `tau^2` pulses.
pub fn coverage_probability(k_u: u64, y0: f64, tau: u64, c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y0) {
        return Err(Error::domain("y0", y0, "[0, 1]"));
    }
    if !(c >= 0.0) {
        return Err(Error::domain("c", c, "[0, inf)"));
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
    let kf = k_u as f64;
    let mean = y0 * kf;
    let half = c * (y0 * (1.0 - y0) * kf).sqrt();
    let slack = 1e-12 * mean.max(1.0);
    let lo = (mean - half - slack).ceil().max(0.0);
    let hi = (mean + half + slack).floor().min(kf);
    if lo > hi {
        return Ok(0.0);
    }
    let (lo, hi) = (lo as u64, hi as u64);

    let blocks = k_u / block;
    let rest = k_u % block;
    let rest_pmf: Vec<f64> = (0..=rest).map(|r| ln_binomial_pmf(r, rest, y0).exp()).collect();
    // block counts b whose range [b tau^2, b tau^2 + rest] meets [lo, hi]
    let b_lo = lo.saturating_sub(rest).div_ceil(block);
    let b_hi = (hi / block).min(blocks);
    let mut total = 0.0;
    for b in b_lo..=b_hi {
        let pb = ln_binomial_pmf(b, blocks, y0).exp();
        if pb == 0.0 {
            continue;
        }
        let base = b * block;
        let r_lo = lo.saturating_sub(base);
        let r_hi = (hi - base.min(hi)).min(rest);
        if base > hi || r_lo > r_hi {
            continue;
        }
        let inner: f64 = rest_pmf[r_lo as usize..=r_hi as usize].iter().sum();
        total += pb * inner;
    }
    Ok(total.min(1.0))
}

/// Per source, whether `|D^i / K^i - Y(mu_i)| <= c sqrt(Y (1 - Y) / K^i)`, the
/// interval an analysis assuming independent pulses would report.
pub fn iid_interval_contains(
    public: &PublicTranscript,
    sources: &[SourceSpec<f64>],
    channel: &ChannelParams<f64>,
    c: f64,
) -> Vec<bool> {
    sources
        .iter()
        .zip(public.source_pulses.iter().zip(&public.source_detections))
        .map(|(s, (&k, &d))| {
            if k == 0 {
                return true;
            }
            let y = total_yield(s.mu, channel);
            let kf = k as f64;
            (d as f64 / kf - y).abs() <= c * (y * (1.0 - y) / kf).sqrt()
        })
        .collect()
}

/// Nominal coverage `1 - exp(-c^2 / 4)` that the tail bound certifies for a
/// multiplier `c`.
pub fn nominal_coverage(c: f64) -> f64 {
    1.0 - (-c * c / 4.0).exp()
}
