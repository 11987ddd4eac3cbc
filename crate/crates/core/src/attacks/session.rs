use serde::{Deserialize, Serialize};

use super::{attack_detections, AttackSpec};
use crate::channel::{source_posteriors, ProtocolConfig, SourceSpec};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::{
    binomial_sample, hypergeometric_sample, multinomial_sample, poisson_pmf, poisson_tail,
};

/// Pulse counts per source and photon class.
///
/// Classes run `0..=n_max` followed by one overflow class for `n > n_max`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonCounts {
    /// `K^i`.
    pub per_source: Vec<u64>,
    /// `k_n^i`, indexed `[i][n]`.
    pub per_source_class: Vec<Vec<u64>>,
}

impl PhotonCounts {
    /// `k_n = sum_i k_n^i`.
    pub fn per_class(&self) -> Vec<u64> {
        let classes = self.per_source_class.first().map_or(0, Vec::len);
        (0..classes)
            .map(|n| self.per_source_class.iter().map(|row| row[n]).sum())
            .collect()
    }

    pub fn overflow(&self) -> u64 {
        self.per_source_class
            .iter()
            .filter_map(|row| row.last())
            .sum()
    }
}

/// What Alice and Bob see after the run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicTranscript {
    pub pulses: u64,
    pub source_labels: Vec<String>,
    pub source_pulses: Vec<u64>,
    pub source_detections: Vec<u64>,
    pub detections: u64,
    pub sifted: u64,
}

/// Ground truth kept for checking estimates. Per-class vectors end with the
/// overflow class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenCounts {
    pub n_max: usize,
    pub pulses_by_class: Vec<u64>,
    pub detections_by_class: Vec<u64>,
    /// `d_n^{i,E}`, indexed `[n][i]`.
    pub detections_by_class_source: Vec<Vec<u64>>,
    pub sifted_by_class: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub public: PublicTranscript,
    pub hidden: HiddenCounts,
    pub seed: u64,
    pub stream_id: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SessionRecord {
    /// Checks every accounting identity between public and hidden counts.
    pub fn check_accounting(&self) -> Result<()> {
        let p = &self.public;
        let h = &self.hidden;
        let fail = |reason: &str| Err(Error::invalid("session record", reason.to_string()));
        let sum = |v: &[u64]| v.iter().sum::<u64>();
        if sum(&p.source_pulses) != p.pulses || sum(&h.pulses_by_class) != p.pulses {
            return fail("pulse totals disagree");
        }
        if sum(&p.source_detections) != p.detections || sum(&h.detections_by_class) != p.detections {
            return fail("detection totals disagree");
        }
        if sum(&h.sifted_by_class) != p.sifted || p.sifted > p.detections {
            return fail("sifted totals disagree");
        }
        for (n, row) in h.detections_by_class_source.iter().enumerate() {
            let d = h.detections_by_class[n];
            if sum(row) != d || d > h.pulses_by_class[n] || h.sifted_by_class[n] > d {
                return fail("per-class counts inconsistent");
            }
        }
        for i in 0..p.source_detections.len() {
            let col: u64 = h.detections_by_class_source.iter().map(|row| row[i]).sum();
            if col != p.source_detections[i] {
                return fail("per-source detections disagree");
            }
        }
        Ok(())
    }
}

fn class_probabilities(mu: f64, n_max: usize) -> Result<Vec<f64>> {
    let mut probs = (0..=n_max as u64)
        .map(|n| poisson_pmf(n, mu))
        .collect::<Result<Vec<_>>>()?;
    probs.push(poisson_tail(n_max as u64, mu)?);
    Ok(probs)
}

/// Draws `K^i ~ Multinomial(K, q)` and then `k_n^i` from each source's
/// Poisson law, truncated at `n_max` with an overflow class.
pub fn sample_photon_counts(
    config: &ProtocolConfig<f64>,
    rng: &mut RngStream,
) -> Result<PhotonCounts> {
    let n_max = config.n_max()?;
    let q: Vec<f64> = config.sources.iter().map(|s| s.q).collect();
    let per_source = multinomial_sample(config.pulses, &q, rng)?;
    let per_source_class = config
        .sources
        .iter()
        .zip(&per_source)
        .map(|(s, &k)| multinomial_sample(k, &class_probabilities(s.mu, n_max)?, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhotonCounts {
        per_source,
        per_source_class,
    })
}

/// Splits each `d_n` across sources as `Multinomial(d_n, q_n^i)`.
///
/// Class `n` is taken as photon number `n`. Returns `[n][i]`.
pub fn split_by_source(
    detections: &[u64],
    sources: &[SourceSpec<f64>],
    rng: &mut RngStream,
) -> Result<Vec<Vec<u64>>> {
    detections
        .iter()
        .enumerate()
        .map(|(n, &d)| {
            if d == 0 {
                Ok(vec![0; sources.len()])
            } else {
                multinomial_sample(d, &source_posteriors(n, sources)?, rng)
            }
        })
        .collect()
}

/// Assigns the `d_n` detected pulses of each class to sources by drawing
/// without replacement from the `k_n^i` pulses actually sent.
///
/// Since the attack never sees labels, this is the exact conditional law; its
/// marginal over `k_n^i` is the multinomial of [`split_by_source`].
pub fn allocate_detections(
    detections: &[u64],
    counts: &PhotonCounts,
    rng: &mut RngStream,
) -> Result<Vec<Vec<u64>>> {
    let k = counts.per_class();
    detections
        .iter()
        .enumerate()
        .map(|(n, &d)| {
            let mut population = k[n];
            let mut remaining = d;
            let mut row = Vec::with_capacity(counts.per_source.len());
            for src in &counts.per_source_class {
                let marked = src[n];
                let take = if remaining == 0 {
                    0
                } else if marked == population {
                    remaining
                } else {
                    hypergeometric_sample(population, marked, remaining, rng)?
                };
                row.push(take);
                population -= marked;
                remaining -= take;
            }
            Ok(row)
        })
        .collect()
}

/// Keeps each detection with probability 1/2 (basis agreement).
pub fn sift(detections: &[u64], rng: &mut RngStream) -> Result<(Vec<u64>, u64)> {
    let f = detections
        .iter()
        .map(|&d| binomial_sample(d, 0.5, rng))
        .collect::<Result<Vec<_>>>()?;
    let total = f.iter().sum();
    Ok((f, total))
}

pub fn simulate_session(
    config: &ProtocolConfig<f64>,
    attack: &AttackSpec,
    rng: &mut RngStream,
) -> Result<SessionRecord> {
    let mut warnings = config.validate()?;
    attack.validate()?;
    let n_max = config.n_max()?;

    let counts = sample_photon_counts(config, rng)?;
    let overflow = counts.overflow();
    if overflow as f64 > config.tail_budget {
        warnings.push(format!(
            "{overflow} pulses above n_max = {n_max} exceed tail budget {}",
            config.tail_budget
        ));
    }
    let pulses_by_class = counts.per_class();
    let detections_by_class =
        attack_detections(attack, &pulses_by_class, &config.channel, rng)?;
    let by_class_source = allocate_detections(&detections_by_class, &counts, rng)?;
    let (sifted_by_class, sifted) = sift(&detections_by_class, rng)?;

    let source_detections = (0..config.sources.len())
        .map(|i| by_class_source.iter().map(|row| row[i]).sum())
        .collect();
    let record = SessionRecord {
        public: PublicTranscript {
            pulses: config.pulses,
            source_labels: config.sources.iter().map(|s| s.label.clone()).collect(),
            source_pulses: counts.per_source.clone(),
            source_detections,
            detections: detections_by_class.iter().sum(),
            sifted,
        },
        hidden: HiddenCounts {
            n_max,
            pulses_by_class,
            detections_by_class,
            detections_by_class_source: by_class_source,
            sifted_by_class,
        },
        seed: rng.seed(),
        stream_id: rng.stream_id(),
        warnings,
    };
    debug_assert!(record.check_accounting().is_ok());
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{pulse_mix_pn, total_yield, ChannelParams};

    fn single(mu: f64, pulses: u64, channel: ChannelParams<f64>) -> ProtocolConfig<f64> {
        ProtocolConfig {
            sources: vec![SourceSpec::new("S", mu, 1.0)],
            channel,
            pulses,
            n_max: Some(12),
            tail_budget: 1e-3,
        }
    }

    #[test]
    fn vacuum_source_has_only_empty_pulses() {
        let cfg = single(0.0, 10_000, ChannelParams { eta: 0.1, y0: 0.01 });
        let c = sample_photon_counts(&cfg, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(c.per_class()[0], 10_000);
        assert_eq!(c.overflow(), 0);
    }

    #[test]
    fn perfect_channel_detects_every_nonempty_pulse() {
        let cfg = single(5.0, 100_000, ChannelParams { eta: 1.0, y0: 0.0 });
        let s = simulate_session(&cfg, &AttackSpec::none(), &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(s.public.detections, s.public.pulses - s.hidden.pulses_by_class[0]);
    }

    #[test]
    fn photon_class_moments() {
        let mut cfg = ProtocolConfig::<f64>::bench();
        cfg.pulses = 10_000;
        let trials = 10_000;
        let mut rng = RngStream::new(11, 0);
        let n_cls = 3;
        let mut s1 = vec![0.0; n_cls];
        let mut s2 = vec![0.0; n_cls];
        for _ in 0..trials {
            let k = sample_photon_counts(&cfg, &mut rng).unwrap().per_class();
            for n in 0..n_cls {
                s1[n] += k[n] as f64;
                s2[n] += (k[n] as f64).powi(2);
            }
        }
        let kf = cfg.pulses as f64;
        for n in 0..n_cls {
            let p = pulse_mix_pn(n, &cfg.sources).unwrap();
            let mean = s1[n] / trials as f64;
            let var = s2[n] / trials as f64 - mean * mean;
            let se = (p * (1.0 - p) * kf / trials as f64).sqrt();
            assert!((mean - p * kf).abs() < 5.0 * se, "mean n = {n}");
            let v = p * (1.0 - p) * kf;
            // standard error of a sample variance is about v sqrt(2 / trials)
            assert!((var - v).abs() < 5.0 * v * (2.0 / trials as f64).sqrt(), "var n = {n}");
        }
    }

    #[test]
    fn split_respects_posteriors() {
        let cfg = ProtocolConfig::<f64>::bench();
        let mut rng = RngStream::new(4, 0);
        let d = [0u64, 1000, 500];
        let trials = 10_000;
        let mut acc = vec![vec![0.0; 3]; 3];
        for _ in 0..trials {
            let split = split_by_source(&d, &cfg.sources, &mut rng).unwrap();
            assert_eq!(split[0], vec![0, 0, 0]);
            for (n, row) in split.iter().enumerate() {
                assert_eq!(row.iter().sum::<u64>(), d[n]);
                if n > 0 {
                    assert_eq!(row[0], 0);
                }
                for i in 0..3 {
                    acc[n][i] += row[i] as f64;
                }
            }
        }
        for n in 1..3 {
            let q = source_posteriors(n, &cfg.sources).unwrap();
            for i in 1..3 {
                let mean = acc[n][i] / trials as f64;
                let se = (d[n] as f64 * q[i] * (1.0 - q[i]) / trials as f64).sqrt();
                assert!((mean - q[i] * d[n] as f64).abs() < 5.0 * se, "n = {n}, i = {i}");
            }
        }
    }

    #[test]
    fn split_rejects_undefined_posterior() {
        let sources = vec![SourceSpec::new("U", 0.0, 1.0)];
        assert!(matches!(
            split_by_source(&[3, 1], &sources, &mut RngStream::new(0, 0)),
            Err(Error::UndefinedPosterior { n: 1 })
        ));
    }

    #[test]
    fn sift_halves() {
        let mut rng = RngStream::new(6, 0);
        assert_eq!(sift(&[0, 0], &mut rng).unwrap(), (vec![0, 0], 0));
        for _ in 0..200 {
            let (_, f) = sift(&[400_000, 600_000], &mut rng).unwrap();
            assert!((f as f64 - 5e5).abs() <= 5.0 * 500.0);
        }
    }

    #[test]
    fn honest_decoy_rate_matches_total_yield() {
        let cfg = ProtocolConfig::<f64>::bench();
        let trials = 200;
        let mut rates = Vec::with_capacity(trials);
        for t in 0..trials {
            let s = simulate_session(&cfg, &AttackSpec::none(), &mut RngStream::new(21, t as u64))
                .unwrap();
            rates.push(s.public.source_detections[1] as f64 / s.public.source_pulses[1] as f64);
        }
        let mean = rates.iter().sum::<f64>() / trials as f64;
        let sd = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0)).sqrt();
        let y = total_yield(cfg.sources[1].mu, &cfg.channel);
        assert!((mean - y).abs() < 5.0 * sd / (trials as f64).sqrt());
    }

    #[test]
    fn deterministic_and_accounted() {
        let cfg = ProtocolConfig::<f64>::bench();
        let a = simulate_session(&cfg, &AttackSpec::block(4), &mut RngStream::new(77, 3)).unwrap();
        let b = simulate_session(&cfg, &AttackSpec::block(4), &mut RngStream::new(77, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.seed, a.stream_id), (77, 3));
        a.check_accounting().unwrap();
        let c = simulate_session(&cfg, &AttackSpec::block(4), &mut RngStream::new(77, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn hypergeometric_allocation_is_consistent() {
        let counts = PhotonCounts {
            per_source: vec![10, 20, 30],
            per_source_class: vec![vec![10, 0], vec![15, 5], vec![5, 25]],
        };
        let mut rng = RngStream::new(9, 0);
        for _ in 0..100 {
            let rows = allocate_detections(&[12, 30], &counts, &mut rng).unwrap();
            assert_eq!(rows[1][0], 0);
            assert_eq!(rows[1], vec![0, 5, 25]);
            assert_eq!(rows[0].iter().sum::<u64>(), 12);
            for (i, src) in counts.per_source_class.iter().enumerate() {
                assert!(rows[0][i] <= src[0]);
            }
        }
    }

    #[test]
    fn overflow_warning_recorded() {
        let mut cfg = single(3.0, 100_000, ChannelParams { eta: 0.1, y0: 0.0 });
        cfg.n_max = Some(2);
        let s = simulate_session(&cfg, &AttackSpec::none(), &mut RngStream::new(1, 1)).unwrap();
        assert!(s.warnings.iter().any(|w| w.contains("tail budget")));
    }
}
