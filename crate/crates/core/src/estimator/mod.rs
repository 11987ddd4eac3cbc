//! Finite-size estimation of vacuum and single-photon detections without
//! assuming independent pulses, and the key rate they certify.

mod baseline;
mod bounds;
mod budget;
mod coverage;
mod posterior;
mod solver;

use serde::{Deserialize, Serialize};

pub use baseline::iid_baseline_estimate;
pub use bounds::{forward_lower, forward_upper, phi_lower, phi_upper, BoundParams};
pub use budget::{allocate_epsilon, build_epsilon_budget, EpsilonAllocation, EpsilonBudget};
pub use coverage::{coverage_probability, iid_interval_contains, nominal_coverage};
pub use posterior::{bayes_dark_posterior, grid_moments};
pub use solver::{
    solve_constraints, solve_min_dn, DetectionConstraints, SolveReport, SolverOptions,
    SolverStatus,
};

use crate::attacks::PublicTranscript;
use crate::channel::ProtocolConfig;
use crate::error::{Error, Result};
use crate::stats::binary_entropy;

/// Sifted-count lower bound from a detection-count lower bound:
/// `F r - c_delta sqrt(F r (1 - r))` with `r = d* / D`, floored at 0.
pub fn lower_bound_f(d_star: f64, detections: u64, sifted: u64, budget: &EpsilonBudget) -> f64 {
    if detections == 0 {
        return 0.0;
    }
    let r = (d_star / detections as f64).clamp(0.0, 1.0);
    let f = sifted as f64;
    (f * r - budget.c_delta * (f * r * (1.0 - r)).sqrt()).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRateParams {
    pub kappa_ec: f64,
    pub kappa_pa: f64,
    /// Bit error rate of the sifted key.
    pub ber: f64,
    /// Bound on the single-photon error rate.
    pub b1_max: f64,
}

impl Default for KeyRateParams {
    fn default() -> Self {
        Self {
            kappa_ec: 1.2,
            kappa_pa: 1.0,
            ber: 0.02,
            b1_max: 0.03,
        }
    }
}

impl KeyRateParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa_ec", self.kappa_ec), ("kappa_pa", self.kappa_pa)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("key parameters", format!("{name} = {v} must be >= 0")));
            }
        }
        for (name, v) in [("ber", self.ber), ("b1_max", self.b1_max)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("key parameters", format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Secure rate per pulse and key length:
/// `f0 + f1 - kappa_ec F H(ber) - kappa_pa f1 H(b1_max)`, kept within `[0, F]`.
pub fn key_rate(
    f0_star: f64,
    f1_star: f64,
    sifted: u64,
    pulses: u64,
    params: &KeyRateParams,
) -> Result<(f64, f64)> {
    params.validate()?;
    let f = sifted as f64;
    let length = f0_star + f1_star
        - params.kappa_ec * f * binary_entropy(params.ber)?
        - params.kappa_pa * f1_star * binary_entropy(params.b1_max)?;
    let length = length.clamp(0.0, f);
    let rate = if pulses == 0 { 0.0 } else { length / pulses as f64 };
    Ok((rate, length))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub d0_star: f64,
    pub d1_star: f64,
    pub f0_star: f64,
    pub f1_star: f64,
    pub key_rate_s: f64,
    pub key_length: f64,
    pub budget: EpsilonBudget,
    /// Worst status of the two solves.
    pub solver_status: SolverStatus,
    /// Largest duality-gap bound of the two solves relative to its value.
    pub solver_gap: f64,
    pub solves: Vec<SolveReport>,
}

/// Budget, both minimizations, sifted bounds and key rate for one transcript.
/// An infeasible transcript yields a zero key with infeasible status.
pub fn estimate_session(
    public: &PublicTranscript,
    config: &ProtocolConfig<f64>,
    eps_dsp: f64,
    params: &KeyRateParams,
    options: &SolverOptions,
) -> Result<EstimationResult> {
    params.validate()?;
    let n_max = config.n_max()?;
    let budget = build_epsilon_budget(eps_dsp, n_max, config.sources.len())?;
    let sys = DetectionConstraints::new(public, &config.sources, &budget, options.cap_total)?;
    let solves = [0, 1]
        .into_iter()
        .map(|n| solve_constraints(&sys, n, options))
        .collect::<Result<Vec<_>>>()?;
    let status = solves
        .iter()
        .map(|s| s.status)
        .max_by_key(|s| match s {
            SolverStatus::Optimal => 0,
            SolverStatus::MaxIterations => 1,
            SolverStatus::Infeasible => 2,
        })
        .expect("two solves");
    let gap = solves
        .iter()
        .map(|s| s.duality_gap / s.value.max(1.0))
        .fold(0.0, f64::max);

    if status == SolverStatus::Infeasible {
        return Ok(EstimationResult {
            d0_star: 0.0,
            d1_star: 0.0,
            f0_star: 0.0,
            f1_star: 0.0,
            key_rate_s: 0.0,
            key_length: 0.0,
            budget,
            solver_status: status,
            solver_gap: gap,
            solves,
        });
    }
    let (d0, d1) = (solves[0].value, solves[1].value);
    let f0 = lower_bound_f(d0, public.detections, public.sifted, &budget);
    let f1 = lower_bound_f(d1, public.detections, public.sifted, &budget);
    let (s, length) = key_rate(f0, f1, public.sifted, public.pulses, params)?;
    Ok(EstimationResult {
        d0_star: d0,
        d1_star: d1,
        f0_star: f0,
        f1_star: f1,
        key_rate_s: s,
        key_length: length,
        budget,
        solver_status: status,
        solver_gap: gap,
        solves,
    })
}
