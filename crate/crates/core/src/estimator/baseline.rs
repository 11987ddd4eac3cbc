use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::attacks::PublicTranscript;
use crate::channel::ProtocolConfig;
use crate::error::{Error, Result};
use crate::stats::{chernoff_c, poisson_pmf};

/// Yield bounds from the textbook analysis that treats pulses as independent.
///
/// Each source's observed rate `D^i / K^i` defines the interval
/// `+- c sqrt(r (1 - r) / K^i)` with `c = 2 sqrt|ln eps_bar|`; the minimal `y_0`
/// and `y_1` over yields in `[0, 1]` whose truncated mixtures
/// `sum_{n <= n_max} p_n^i y_n` fall inside every interval come from two
/// linear programs.
pub fn iid_baseline_estimate(
    public: &PublicTranscript,
    config: &ProtocolConfig<f64>,
    eps_bar: f64,
) -> Result<(f64, f64)> {
    let c = chernoff_c(eps_bar)?;
    let n_max = config.n_max()?;
    if public.source_pulses.len() != config.sources.len() {
        return Err(Error::invalid("transcript", "source count mismatch"));
    }
    let mut rows = Vec::with_capacity(config.sources.len());
    for (s, (&k, &d)) in config
        .sources
        .iter()
        .zip(public.source_pulses.iter().zip(&public.source_detections))
    {
        if k == 0 {
            continue;
        }
        let kf = k as f64;
        let rate = d as f64 / kf;
        let half = c * (rate * (1.0 - rate) / kf).sqrt();
        let coeffs = (0..=n_max as u64)
            .map(|n| poisson_pmf(n, s.mu))
            .collect::<Result<Vec<_>>>()?;
        rows.push((coeffs, rate - half, rate + half));
    }
    let y0 = minimize_yield(&rows, n_max, 0)?;
    let y1 = minimize_yield(&rows, n_max, 1)?;
    Ok((y0, y1))
}

fn minimize_yield(rows: &[(Vec<f64>, f64, f64)], n_max: usize, target: usize) -> Result<f64> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..=n_max)
        .map(|n| lp.add_var(if n == target { 1.0 } else { 0.0 }, (0.0, 1.0)))
        .collect();
    for (coeffs, lo, hi) in rows {
        let expr: Vec<_> = vars.iter().copied().zip(coeffs.iter().copied()).collect();
        lp.add_constraint(expr.clone(), ComparisonOp::Ge, *lo);
        lp.add_constraint(expr, ComparisonOp::Le, *hi);
    }
    match lp.solve() {
        Ok(microlp::SolveOutcome::Solution(sol)) => Ok(sol.var_value(vars[target]).max(0.0)),
        Ok(microlp::SolveOutcome::Interrupted(_)) => {
            Err(Error::LinearProgram("solve interrupted".into()))
        }
        Err(microlp::Error::Infeasible) => Err(Error::Infeasible(
            "no yields reproduce the observed rates".into(),
        )),
        Err(e) => Err(Error::LinearProgram(e.to_string())),
    }
}
