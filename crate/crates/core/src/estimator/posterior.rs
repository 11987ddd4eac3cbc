use crate::error::{Error, Result};

/// Posterior over a grid of dark-count rates for `d_u` detections in `k_u`
/// vacuum pulses, uniform prior, when detections come in blocks of `tau^2`:
/// `y^(d_u / tau^2) (1 - y)^((k_u - d_u) / tau^2)`, normalized on the grid.
///
/// Non-integer exponents are rounded to the nearest integer block count.
pub fn bayes_dark_posterior(d_u: u64, k_u: u64, tau: u64, grid: &[f64]) -> Result<Vec<f64>> {
    if d_u > k_u {
        return Err(Error::invalid(
            "posterior",
            format!("{d_u} detections exceed {k_u} pulses"),
        ));
    }
    if tau == 0 {
        return Err(Error::invalid("attack", "tau must be at least 1"));
    }
    if let Some(y) = grid.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(Error::domain("grid point", *y, "[0, 1]"));
    }
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let block = (tau * tau) as f64;
    let hits = (d_u as f64 / block).round();
    let misses = ((k_u - d_u) as f64 / block).round();
    let term = |count: f64, p: f64| if count == 0.0 { 0.0 } else { count * p.ln() };
    let logs: Vec<f64> = grid
        .iter()
        .map(|&y| term(hits, y) + term(misses, 1.0 - y))
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::invalid(
            "posterior",
            "grid has no point with positive likelihood",
        ));
    }
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let norm: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / norm).collect())
}

/// Mean and standard deviation of a normalized distribution on a grid.
pub fn grid_moments(grid: &[f64], weights: &[f64]) -> (f64, f64) {
    let mean: f64 = grid.iter().zip(weights).map(|(y, w)| y * w).sum();
    let var: f64 = grid
        .iter()
        .zip(weights)
        .map(|(y, w)| (y - mean).powi(2) * w)
        .sum();
    (mean, var.sqrt())
}
