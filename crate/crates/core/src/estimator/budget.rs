use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Field;

/// Exact split of the security parameter: `eps_n = eps / (4 S) / 2^n` for
/// each photon number, `eps_bar = S * sum_n eps_n` for the estimation step
/// and `delta_bar = eps / 2` for sifting.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonAllocation<T> {
    pub eps_n: Vec<T>,
    pub eps_bar: T,
    pub delta_bar: T,
}

pub fn allocate_epsilon<T: Field>(
    eps_dsp: T,
    n_max: usize,
    num_sources: usize,
) -> Result<EpsilonAllocation<T>> {
    if num_sources == 0 {
        return Err(Error::invalid("budget", "at least one source is required"));
    }
    if eps_dsp <= T::zero() {
        return Err(Error::invalid("budget", "eps_dsp must be positive"));
    }
    let sources = T::from_usize(num_sources).expect("small integer");
    let two = T::from_u8(2).expect("small integer");
    let mut eps_n = Vec::with_capacity(n_max + 1);
    let mut term = eps_dsp.clone() / (T::from_u8(4).expect("small integer") * sources.clone());
    for _ in 0..=n_max {
        eps_n.push(term.clone());
        term = term / two.clone();
    }
    let per_source = eps_n.iter().fold(T::zero(), |acc, e| acc + e.clone());
    Ok(EpsilonAllocation {
        eps_bar: sources * per_source,
        delta_bar: eps_dsp / two,
        eps_n,
    })
}

/// Error budget with the matching bound multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub eps_dsp: f64,
    pub num_sources: usize,
    pub eps_n: Vec<f64>,
    /// `c_n = 2 sqrt|ln(eps / (8 S)) - n ln 2|`.
    pub c_n: Vec<f64>,
    pub eps_bar: f64,
    pub delta_bar: f64,
    /// `2 sqrt|ln(eps / 2)|`.
    pub c_delta: f64,
}

impl EpsilonBudget {
    pub fn n_max(&self) -> usize {
        self.c_n.len() - 1
    }

    /// Total failure probability charged by the estimate.
    pub fn total(&self) -> f64 {
        self.eps_bar + self.delta_bar
    }
}

pub fn build_epsilon_budget(eps_dsp: f64, n_max: usize, num_sources: usize) -> Result<EpsilonBudget> {
    let ceiling = 8.0 * num_sources as f64;
    if !(eps_dsp > 0.0 && eps_dsp < ceiling) {
        return Err(Error::domain("eps_dsp", eps_dsp, "(0, 8 * sources)"));
    }
    let alloc = allocate_epsilon(eps_dsp, n_max, num_sources)?;
    let base = (eps_dsp / ceiling).ln();
    let c_n = (0..=n_max)
        .map(|n| 2.0 * (base - n as f64 * std::f64::consts::LN_2).abs().sqrt())
        .collect();
    Ok(EpsilonBudget {
        eps_dsp,
        num_sources,
        eps_n: alloc.eps_n,
        c_n,
        eps_bar: alloc.eps_bar,
        delta_bar: alloc.delta_bar,
        c_delta: 2.0 * (eps_dsp / 2.0).ln().abs().sqrt(),
    })
}
