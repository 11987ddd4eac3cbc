//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero on any unexpected result.
//!
//! Criteria listed in `KNOWN_FAILURES` are still evaluated in full and still
//! print FAIL; the run only errors if one of them starts passing.

use std::path::Path;
use std::process::Command as Proc;
use std::time::{Duration, Instant};

use decoy_core::attacks::{analytic_sigma, split_by_source};
use decoy_core::channel::pulse_mix_pn;
use decoy_core::estimator::{
    allocate_epsilon, bayes_dark_posterior, build_epsilon_budget, coverage_probability,
    forward_lower, forward_upper, grid_moments, nominal_coverage, phi_lower, phi_upper,
    solve_min_dn, BoundParams,
};
use decoy_core::stats::{chernoff_binomial_tail_bound, total_variance_decompose, JointPmf};
use decoy_core::{
    AttackSpec, ChannelParams, ProtocolConfig, PublicTranscript, RngStream, SolverOptions,
    SolverStatus, SourceSpec,
};
use decoy_harness::experiments::{soundness_campaign, variance_campaign, DarkCountSetup, IID_C};
use decoy_harness::ExperimentConfig;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

/// Criteria that cannot hold as stated; see the detail line for the reason.
const KNOWN_FAILURES: &[usize] = &[1, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn main() {
    let criteria: Vec<(usize, &str, u64, fn() -> Verdict)> = vec![
        (1, "analytic deviation curves", 1, c1_analytic_sigma),
        (2, "variance law vs simulation", 300, c2_variance_law),
        (3, "law of total variance", 10, c3_total_variance),
        (4, "Chernoff tail validity", 10, c4_chernoff),
        (5, "bound round trips", 1, c5_round_trip),
        (6, "estimator soundness", 900, c6_soundness),
        (7, "solver vs grid oracle", 300, c7_solver_oracle),
        (8, "independent-pulse coverage under blocking", 600, c8_iid_coverage),
        (9, "error budget in exact arithmetic", 1, c9_budget),
        (10, "posterior width scaling", 10, c10_posterior),
        (11, "determinism of every subcommand", 60, c11_determinism),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = Vec::new();
    let mut ran = 0;
    for (id, name, limit, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = v.pass && in_time;
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.2} s of {limit} s{}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", too slow" },
        );
        if pass == KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: {ran} criteria evaluated, known failures {KNOWN_FAILURES:?}");
    } else {
        println!("acceptance: unexpected result for criteria {unexpected:?}");
        std::process::exit(1);
    }
}

fn c1_analytic_sigma() -> Verdict {
    let cfg = ProtocolConfig::fig1();
    let s1 = analytic_sigma(&cfg, 1).unwrap();
    let s50 = analytic_sigma(&cfg, 50).unwrap();
    let s100 = analytic_sigma(&cfg, 100).unwrap();
    let rel = (s1.sigma[0] / 1.4142e-7 - 1.0).abs();
    let ratios: Vec<f64> = s100.sigma.iter().zip(&s50.sigma).map(|(a, b)| a / b).collect();
    let ratios_ok = ratios.iter().all(|r| (1.96..=2.04).contains(r));
    // the V ratio stays below 1.96 because (tau^2 - 1) q_1^V (1 - y_1) is only
    // about 14 at tau = 50, not large against the independent-pulse term
    verdict(
        rel <= 0.01 && ratios_ok,
        format!(
            "sigma_U(1) = {:.6e} (rel. err {rel:.2e}); sigma(100)/sigma(50) for {} = {}",
            s1.sigma[0],
            cfg.sources.iter().map(|s| s.label.as_str()).collect::<Vec<_>>().join(", "),
            fmt_list(&ratios, 4)
        ),
    )
}

fn c2_variance_law() -> Verdict {
    let cfg = ExperimentConfig::bench();
    let mut worst = (0.0f64, String::new());
    let mut checks = 0;
    for tau in [1u64, 5, 10] {
        for c in variance_campaign(&cfg.protocol, tau, 3, 2000, cfg.seed, 1).unwrap() {
            checks += 1;
            let e = c.relative_error();
            if e > worst.0 {
                worst = (e, format!("tau {} n {} source {}", c.tau, c.n, c.source));
            }
        }
    }
    verdict(
        worst.0 <= 0.10,
        format!("{checks} (tau, n, source) entries, worst rel. err {:.3} at {}", worst.0, worst.1),
    )
}

fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn binomial_pmf_exact(n: u64, p: &BigRational) -> Vec<BigRational> {
    let q = BigRational::one() - p;
    let mut coef = BigInt::one();
    let mut out = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        if k > 0 {
            coef = coef * BigInt::from(n - k + 1) / BigInt::from(k);
        }
        out.push(BigRational::from_integer(coef.clone()) * pow(p, k) * pow(&q, n - k));
    }
    out
}

fn pow(x: &BigRational, e: u64) -> BigRational {
    num_traits::pow(x.clone(), e as usize)
}

/// Exact law of the block attack: `tau^2 Bin(k / tau^2, y) + Bin(k mod tau^2, y)`.
fn block_pmf_exact(k: u64, y: &BigRational, tau: u64) -> Vec<BigRational> {
    let block = tau * tau;
    let blocks = binomial_pmf_exact(k / block, y);
    let rest = binomial_pmf_exact(k % block, y);
    let mut out = vec![BigRational::zero(); k as usize + 1];
    for (b, pb) in blocks.iter().enumerate() {
        for (r, pr) in rest.iter().enumerate() {
            out[b * block as usize + r] += pb * pr;
        }
    }
    out
}

fn c3_total_variance() -> Verdict {
    let mut rng = RngStream::new(3, 0);
    let mut worst = 0.0f64;
    let mut worst_f64 = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(2..=50u64);
        let tau = rng.random_range(1..=3u64);
        let p = rational(rng.random_range(1..100), 100);
        let y = rational(rng.random_range(1..100), 100);
        // X = photon-class size ~ Bin(K, p), Y | X = block-attack detections
        let px = binomial_pmf_exact(k, &p);
        let mut joint = vec![vec![BigRational::zero(); k as usize + 1]; k as usize + 1];
        for (x, pxv) in px.iter().enumerate() {
            for (d, pd) in block_pmf_exact(x as u64, &y, tau).into_iter().enumerate() {
                joint[x][d] = pxv * pd;
            }
        }
        // total variance straight from the marginal of Y
        let marginal: Vec<BigRational> = (0..=k as usize)
            .map(|d| joint.iter().map(|row| row[d].clone()).sum())
            .collect();
        let m1: BigRational = marginal.iter().enumerate().map(|(d, p)| p * rational(d as i64, 1)).sum();
        let m2: BigRational = marginal
            .iter()
            .enumerate()
            .map(|(d, p)| p * rational((d * d) as i64, 1))
            .sum();
        let direct = m2 - &m1 * &m1;
        let floats: Vec<Vec<f64>> = joint
            .iter()
            .map(|row| row.iter().map(|v| v.to_f64().unwrap()).collect())
            .collect();
        let dec = total_variance_decompose(&JointPmf::new(joint).unwrap());
        worst = worst.max((direct.clone() - dec.rhs()).abs().to_f64().unwrap());
        let dec_f = total_variance_decompose(&JointPmf::new(floats).unwrap());
        worst_f64 = worst_f64.max((direct.to_f64().unwrap() - dec_f.rhs()).abs());
    }
    verdict(
        worst <= 1e-12 && worst_f64 <= 1e-12,
        format!("100 joints, K <= 50: max |gap| exact {worst:.1e}, double precision {worst_f64:.1e}"),
    )
}

fn c4_chernoff() -> Verdict {
    let mut points = 0;
    let mut strict_bad = 0;
    let mut closed_bad = 0;
    let mut regime_points = 0;
    let mut regime_bad = 0;
    let mut example = None;
    for n in 1..=30u64 {
        for j in 1..100i64 {
            let a = rational(j, 100);
            let pmf = binomial_pmf_exact(n, &a);
            let af = j as f64 / 100.0;
            let mean = rational(j * n as i64, 100);
            for k in 0..=n {
                if rational(k as i64, 1) < mean {
                    continue;
                }
                points += 1;
                let bound = chernoff_binomial_tail_bound(k as f64, n, af).unwrap();
                let strict: BigRational = pmf[k as usize + 1..].iter().sum();
                let closed = &strict + &pmf[k as usize];
                let (strict, closed) = (strict.to_f64().unwrap(), closed.to_f64().unwrap());
                if strict > bound {
                    strict_bad += 1;
                    example.get_or_insert((n, af, k, strict, bound));
                }
                closed_bad += (closed > bound) as u32;
                // deviations up to 2 n a (1 - a), where the bound is a theorem
                if (k as f64 - n as f64 * af) <= 2.0 * n as f64 * af * (1.0 - af) {
                    regime_points += 1;
                    regime_bad += (closed > bound) as u32;
                }
            }
        }
    }
    let ex = example
        .map(|(n, a, k, t, b)| format!("; e.g. n = {n}, a = {a}, k = {k}: Pr[X > k] = {t:.2e} > {b:.2e}"))
        .unwrap_or_default();
    verdict(
        strict_bad == 0,
        format!(
            "{strict_bad} of {points} grid points violate Pr[X > k] <= bound ({closed_bad} for Pr[X >= k]){ex}; \
             within k - na <= 2na(1-a): {regime_bad} of {regime_points}"
        ),
    )
}

fn c5_round_trip() -> Verdict {
    let mut worst_lower = 0.0f64;
    let mut worst_upper = 0.0f64;
    let mut worst_right = 0.0f64;
    let mut off_branch = 0;
    let mut off_branch_bad = 0;
    for &d in &[0.0, 1.0, 10.0, 1e3, 1e6] {
        for &q in &[0.016, 0.1, 0.5, 0.99] {
            for &c in &[0.0, 1.0, 8.8] {
                let p = BoundParams::new(q, c).unwrap();
                let tol = 1e-9 * f64::max(1.0, d);
                worst_lower = worst_lower.max((phi_lower(forward_upper(d, &p), &p) - d).abs() / tol);
                // phi_upper is the largest preimage; it inverts forward_lower
                // where that map increases
                let back = phi_upper(forward_lower(d, &p), &p);
                if d >= c * c * (1.0 - q) / (4.0 * q) {
                    worst_upper = worst_upper.max((back - d).abs() / tol);
                } else {
                    off_branch += 1;
                    off_branch_bad += (back < d) as u32;
                }
                let u = forward_upper(d, &p);
                worst_right = worst_right
                    .max((forward_lower(phi_upper(u, &p), &p) - u).abs() / (1e-9 * f64::max(1.0, u)));
            }
        }
    }
    verdict(
        worst_lower <= 1.0 && worst_upper <= 1.0 && worst_right <= 1.0 && off_branch_bad == 0,
        format!(
            "60 points; worst error / tolerance: phi_lower {worst_lower:.2e}, phi_upper {worst_upper:.2e}, \
             forward_lower(phi_upper) {worst_right:.2e}; {off_branch} points below the increasing branch map \
             to a larger preimage ({off_branch_bad} not)"
        ),
    )
}

fn bench_campaign(attack: AttackSpec) -> decoy_harness::experiments::SoundnessSummary {
    let cfg = ExperimentConfig {
        attack,
        ..ExperimentConfig::bench()
    };
    soundness_campaign(&cfg, 1, &SolverOptions::default()).unwrap().0
}

fn iid_degraded() -> AttackSpec {
    // single-photon yield cut to 60% of the channel's
    let ch = ProtocolConfig::bench().channel;
    let y1 = 1.0 - (1.0 - ch.y0) * (1.0 - ch.eta);
    AttackSpec::iid([(1usize, 0.6 * y1)].into_iter().collect())
}

fn c6_soundness() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, attack) in [
        ("none", AttackSpec::none()),
        ("block tau 10", AttackSpec::block(10)),
        ("iid degraded", iid_degraded()),
    ] {
        let s = bench_campaign(attack);
        ok &= s.trials >= 500 && s.violation_rate <= 0.01;
        parts.push(format!(
            "{name}: {}/{} violations, {} non-optimal, mean key {:.0}",
            s.violations, s.trials, s.non_optimal, s.mean_key_length
        ));
    }
    verdict(ok, parts.join("; "))
}

fn c8_iid_coverage() -> Verdict {
    let nominal = nominal_coverage(IID_C);
    let blocked = bench_campaign(AttackSpec::block(10));
    let control = bench_campaign(AttackSpec::none());
    let setup = DarkCountSetup::from_config(&ExperimentConfig::bench()).unwrap();
    let exact = coverage_probability(setup.pulses, setup.y0, 10, IID_C).unwrap();
    let below = blocked.iid_coverage.iter().all(|&c| c < nominal - 0.10) && blocked.iid_joint_coverage < nominal - 0.10;
    verdict(
        below && blocked.violation_rate <= 0.01,
        format!(
            "c = {IID_C}, nominal {nominal:.3}; tau 10 coverage per source {} joint {:.3}; \
             tau 1 control {} joint {:.3}; exact vacuum coverage at tau 10 {exact:.3}; \
             estimator violations under tau 10: {}/{}",
            fmt_list(&blocked.iid_coverage, 3),
            blocked.iid_joint_coverage,
            fmt_list(&control.iid_coverage, 3),
            control.iid_joint_coverage,
            blocked.violations,
            blocked.trials
        ),
    )
}

fn poisson(n: usize, mu: f64) -> f64 {
    let mut p = (-mu).exp();
    for j in 1..=n {
        p *= mu / j as f64;
    }
    p
}

/// One random instance with `n_max = 2`: exact expected class detections,
/// split across sources by their posteriors.
struct Instance {
    sources: Vec<SourceSpec>,
    public: PublicTranscript,
}

fn random_instance(rng: &mut RngStream) -> Instance {
    let pulses = 1_000_000u64;
    let mu_v = rng.random_range(0.05..0.3);
    let mu_w = rng.random_range(0.4..1.0);
    let q_u = rng.random_range(0.05..0.3);
    let q_v = rng.random_range(0.1..0.4);
    let sources = vec![
        SourceSpec::new("U", 0.0, q_u),
        SourceSpec::new("V", mu_v, q_v),
        SourceSpec::new("W", mu_w, 1.0 - q_u - q_v),
    ];
    let channel = ChannelParams {
        eta: rng.random_range(0.3..0.9),
        y0: rng.random_range(0.2..0.5),
    };
    let d: Vec<u64> = (0..=2)
        .map(|n| {
            let y = 1.0 - (1.0 - channel.y0) * (1.0 - channel.eta).powi(n as i32);
            (pulses as f64 * pulse_mix_pn(n, &sources).unwrap() * y).round() as u64
        })
        .collect();
    let split = split_by_source(&d, &sources, rng).unwrap();
    let source_detections: Vec<u64> = (0..3).map(|i| split.iter().map(|row| row[i]).sum()).collect();
    let detections = source_detections.iter().sum();
    Instance {
        public: PublicTranscript {
            pulses,
            source_labels: sources.iter().map(|s| s.label.clone()).collect(),
            source_pulses: sources.iter().map(|s| (s.q * pulses as f64).round() as u64).collect(),
            source_detections,
            detections,
            sifted: detections / 2,
        },
        sources,
    }
}

/// Brute-force minimum of `d_target` over `n_max = 2`, built from scratch:
/// the two free counts are gridded in `x = sqrt(d)` and the target's feasible
/// interval is solved for exactly at every grid point.
struct Oracle {
    q: Vec<[f64; 3]>,
    b: Vec<[f64; 3]>,
    observed: Vec<f64>,
    total: f64,
    pulses: f64,
}

impl Oracle {
    fn new(inst: &Instance, eps: f64) -> Self {
        let s = inst.sources.len() as f64;
        let c: Vec<f64> = (0..3)
            .map(|n| 2.0 * ((eps / (8.0 * s)).ln() - n as f64 * 2f64.ln()).abs().sqrt())
            .collect();
        let mut q = vec![[0.0; 3]; inst.sources.len()];
        let mut b = q.clone();
        for n in 0..3 {
            let w: Vec<f64> = inst.sources.iter().map(|s| s.q * poisson(n, s.mu)).collect();
            let sum: f64 = w.iter().sum();
            for i in 0..inst.sources.len() {
                q[i][n] = w[i] / sum;
                b[i][n] = c[n] * (q[i][n] * (1.0 - q[i][n])).sqrt();
            }
        }
        Self {
            q,
            b,
            observed: inst.public.source_detections.iter().map(|&x| x as f64).collect(),
            total: inst.public.detections as f64,
            pulses: inst.public.pulses as f64,
        }
    }

    /// Smallest feasible `x_t` given the other two coordinates.
    fn min_target(&self, t: usize, others: [(usize, f64); 2]) -> Option<f64> {
        let mut lo = 0.0f64;
        let mut hi = self.pulses.min(self.total - others.iter().map(|(_, x)| x * x).sum::<f64>());
        if hi < 0.0 {
            return None;
        }
        hi = hi.sqrt();
        for i in 0..self.q.len() {
            let (qt, bt) = (self.q[i][t], self.b[i][t]);
            let (mut up, mut down) = (0.0, 0.0);
            for &(n, x) in &others {
                up += self.q[i][n] * x * x + self.b[i][n] * x;
                down += self.q[i][n] * x * x - self.b[i][n] * x;
            }
            let need = self.observed[i] - up;
            let room = self.observed[i] - down;
            if qt == 0.0 {
                // source never emits this photon number
                if need > 0.0 || room < 0.0 {
                    return None;
                }
                continue;
            }
            // qt x^2 + bt x >= D - up
            if need > 0.0 {
                lo = lo.max((-bt + (bt * bt + 4.0 * qt * need).sqrt()) / (2.0 * qt));
            }
            // qt x^2 - bt x <= D - down
            let disc = bt * bt + 4.0 * qt * room;
            if disc < 0.0 {
                return None;
            }
            let r = disc.sqrt();
            lo = lo.max((bt - r) / (2.0 * qt));
            hi = hi.min((bt + r) / (2.0 * qt));
        }
        (lo <= hi).then_some(lo)
    }

    fn minimize(&self, t: usize) -> Option<f64> {
        let [a, b] = match t {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };
        let span = self.total.min(self.pulses).sqrt();
        let scan = |a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64, g: usize, keep: &mut Vec<(f64, f64, f64)>| {
            for ja in 0..=g {
                let xa = a_lo + (a_hi - a_lo) * ja as f64 / g as f64;
                for jb in 0..=g {
                    let xb = b_lo + (b_hi - b_lo) * jb as f64 / g as f64;
                    if let Some(x) = self.min_target(t, [(a, xa), (b, xb)]) {
                        keep.push((x * x, xa, xb));
                    }
                }
            }
        };
        let g = 1000;
        let step = span / g as f64;
        let mut coarse = Vec::new();
        scan(0.0, span, 0.0, span, g, &mut coarse);
        coarse.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut best = coarse.first()?.0;
        for &(_, xa, xb) in coarse.iter().take(16) {
            let mut fine = Vec::new();
            scan((xa - step).max(0.0), xa + step, (xb - step).max(0.0), xb + step, 200, &mut fine);
            best = fine.iter().map(|f| f.0).fold(best, f64::min);
        }
        Some(best)
    }
}

fn c7_solver_oracle() -> Verdict {
    let eps = 0.01;
    let mut rng = RngStream::new(7, 0);
    let mut worst = (0.0f64, String::new());
    let mut compared = 0;
    let mut problems = Vec::new();
    for inst_id in 0..50 {
        let inst = random_instance(&mut rng);
        let budget = build_epsilon_budget(eps, 2, inst.sources.len()).unwrap();
        let oracle = Oracle::new(&inst, eps);
        for t in 0..2 {
            let report = solve_min_dn(&inst.public, &inst.sources, &budget, t, &SolverOptions::default()).unwrap();
            match (oracle.minimize(t), report.status) {
                (Some(o), SolverStatus::Optimal) => {
                    compared += 1;
                    let rel = (report.value - o).abs() / o.max(1.0);
                    if rel > worst.0 {
                        worst = (rel, format!("instance {inst_id} n = {t}: solver {:.4} oracle {o:.4}", report.value));
                    }
                }
                (o, s) => problems.push(format!("instance {inst_id} n = {t}: oracle {o:?}, solver {s:?}")),
            }
        }
    }
    verdict(
        problems.is_empty() && worst.0 <= 0.005,
        format!(
            "{compared} minimizations compared, worst rel. diff {:.2e} ({}){}",
            worst.0,
            worst.1,
            if problems.is_empty() { String::new() } else { format!("; mismatched: {}", problems.join(", ")) }
        ),
    )
}

fn c9_budget() -> Verdict {
    let mut ok = true;
    let mut lines = Vec::new();
    for den in [1_000i64, 100_000, 10_000_000] {
        let eps = rational(1, den);
        let epsf = 1.0 / den as f64;
        for (n_max, sources) in [(2usize, 3usize), (12, 3), (40, 3), (40, 5)] {
            let a = allocate_epsilon(eps.clone(), n_max, sources).unwrap();
            let per_source: BigRational = a.eps_n.iter().cloned().sum();
            let all = per_source * rational(sources as i64, 1);
            let half = &eps / rational(2, 1);
            ok &= all <= half && a.eps_bar == all && a.eps_bar.clone() + a.delta_bar.clone() <= eps;
            let b = build_epsilon_budget(epsf, n_max, sources).unwrap();
            let sum_f: f64 = sources as f64 * b.eps_n.iter().sum::<f64>();
            ok &= sum_f <= epsf / 2.0 && b.eps_bar + b.delta_bar <= epsf;
        }
        let a = allocate_epsilon(eps.clone(), 40, 3).unwrap();
        let slack = (&eps / rational(2, 1) - a.eps_bar.clone()) / &eps;
        lines.push(format!("eps = 1/{den}: eps/2 - eps_bar = {:.3e} eps", slack.to_f64().unwrap()));
    }
    verdict(ok, format!("exact rationals and doubles, n_max up to 40, 3 and 5 sources; {}", lines.join(", ")))
}

fn c10_posterior() -> Verdict {
    let (d, k) = (1_000u64, 1_000_000u64);
    let grid: Vec<f64> = (0..=40_000).map(|j| j as f64 * 1e-7).collect();
    let sd = |tau| {
        let w = bayes_dark_posterior(d, k, tau, &grid).unwrap();
        grid_moments(&grid, &w).1
    };
    let (s1, s10) = (sd(1), sd(10));
    let ratio = s10 / s1;
    verdict(
        (ratio / 10.0 - 1.0).abs() <= 0.10,
        format!("sd(tau 1) = {s1:.4e}, sd(tau 10) = {s10:.4e}, ratio {ratio:.3}"),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> i32 {
    Proc::new(env!("CARGO_BIN_EXE_decoy"))
        .args(args)
        .current_dir(dir)
        .env_remove("DECOY_OUT_DIR")
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn c11_determinism() -> Verdict {
    let bench = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/bench.json");
    let bench = bench.to_str().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["simulate", "--config", bench],
        vec!["estimate", "--config", bench, "--session", "session.json", "--out", "from_session.json"],
        vec!["estimate", "--config", bench],
        vec!["sweep-tau", "--config", bench],
        vec!["coverage", "--config", bench],
        vec!["posterior", "--config", bench],
        vec!["soundness", "--config", bench, "--trials", "40", "--tau", "10"],
        vec!["reproduce-fig1"],
        vec!["reproduce-fig2"],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut codes = Vec::new();
    for (w, dir) in dirs.iter().enumerate() {
        let workers = (w + 1).to_string();
        for args in &runs {
            let mut args = args.clone();
            args.extend(["--workers", &workers]);
            codes.push(run_cli(&args, dir.path()));
        }
    }
    let files = |root: &Path| {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(p) = stack.pop() {
            for e in std::fs::read_dir(&p).unwrap() {
                let path = e.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
                }
            }
        }
        out.sort();
        out
    };
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    let identical = a == b;
    let all_zero = codes.iter().all(|&c| c == 0);
    verdict(
        identical && all_zero && a.len() == 11,
        format!(
            "{} subcommand runs, {} artifacts, exit codes all zero: {all_zero}, byte-identical across runs \
             with 1 and 2 workers: {identical}",
            codes.len(),
            a.len()
        ),
    )
}

fn fmt_list(xs: &[f64], digits: usize) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.digits$}")).collect();
    format!("[{}]", parts.join(", "))
}
