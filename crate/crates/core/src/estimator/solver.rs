//! Minimum of one photon-number detection count consistent with the
//! per-source observations.
//!
//! For each source `i` the unknown counts `d_n` must satisfy
//!
//! ```text
//! sum_n q_n^i d_n + b_n^i sqrt(d_n) >= D^i
//! sum_n q_n^i d_n - b_n^i sqrt(d_n) <= D^i,    b_n^i = c_n sqrt(q_n^i (1 - q_n^i))
//! ```
//!
//! with `0 <= d_n <= K` and optionally `sum_n d_n <= D`. In the variables `d_n`
//! both families are convex (`sqrt` is concave), so the region is convex and a
//! log-barrier interior-point method finds the global minimum. The reported
//! value subtracts the barrier's duality-gap bound, so it never exceeds the
//! true minimum by more than rounding.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::budget::EpsilonBudget;
use crate::attacks::PublicTranscript;
use crate::channel::{source_posteriors, SourceSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Impose `sum_n d_n <= D`.
    pub cap_total: bool,
    pub max_newton_steps: usize,
    /// Stop once the duality gap is below this fraction of `max(D, 1)`.
    pub gap_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cap_total: true,
            max_newton_steps: 5000,
            gap_tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub target: usize,
    /// Certified lower bound on `min d_target`; 0 unless status is optimal.
    pub value: f64,
    pub status: SolverStatus,
    /// Minimizer, one entry per photon number `0..=n_max`.
    pub detections: Vec<f64>,
    /// Upper bound on `value`'s distance below the true minimum, in counts.
    pub duality_gap: f64,
    /// Largest constraint violation at the minimizer relative to `max(D^i, 1)`.
    pub residual: f64,
    pub newton_steps: usize,
}

impl SolveReport {
    fn fixed(target: usize, value: f64, detections: Vec<f64>) -> Self {
        Self {
            target,
            value,
            status: SolverStatus::Optimal,
            detections,
            duality_gap: 0.0,
            residual: 0.0,
            newton_steps: 0,
        }
    }

    fn failed(target: usize, status: SolverStatus, n_max: usize, steps: usize) -> Self {
        Self {
            target,
            value: 0.0,
            status,
            detections: vec![0.0; n_max + 1],
            duality_gap: f64::INFINITY,
            residual: f64::INFINITY,
            newton_steps: steps,
        }
    }
}

/// The constraint system for a transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionConstraints {
    /// `q_n^i`, indexed `[i][n]`.
    pub q: Vec<Vec<f64>>,
    /// `c_n sqrt(q_n^i (1 - q_n^i))`, indexed `[i][n]`.
    pub b: Vec<Vec<f64>>,
    /// Whether any source emits `n` photons.
    pub defined: Vec<bool>,
    pub observed: Vec<f64>,
    pub total: f64,
    pub pulses: f64,
    pub cap_total: bool,
}

impl DetectionConstraints {
    pub fn new(
        public: &PublicTranscript,
        sources: &[SourceSpec<f64>],
        budget: &EpsilonBudget,
        cap_total: bool,
    ) -> Result<Self> {
        if public.source_detections.len() != sources.len() {
            return Err(Error::invalid(
                "transcript",
                format!(
                    "{} per-source counts for {} sources",
                    public.source_detections.len(),
                    sources.len()
                ),
            ));
        }
        let n_max = budget.n_max();
        let mut q = vec![vec![0.0; n_max + 1]; sources.len()];
        let mut b = q.clone();
        let mut defined = vec![false; n_max + 1];
        for n in 0..=n_max {
            let post = match source_posteriors(n, sources) {
                Ok(p) => p,
                Err(Error::UndefinedPosterior { .. }) => continue,
                Err(e) => return Err(e),
            };
            defined[n] = true;
            for (i, qi) in post.into_iter().enumerate() {
                q[i][n] = qi;
                b[i][n] = budget.c_n[n] * (qi * (1.0 - qi)).max(0.0).sqrt();
            }
        }
        Ok(Self {
            q,
            b,
            defined,
            observed: public.source_detections.iter().map(|&x| x as f64).collect(),
            total: public.detections as f64,
            pulses: public.pulses as f64,
            cap_total,
        })
    }

    pub fn n_max(&self) -> usize {
        self.defined.len() - 1
    }

    /// Largest violation at `d`, relative to `max(D^i, 1)` for the source
    /// constraints and to `max(D, 1)` for the totals.
    pub fn violation(&self, d: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.q.len() {
            let (mut up, mut lo) = (0.0, 0.0);
            for (n, &dn) in d.iter().enumerate() {
                let root = dn.max(0.0).sqrt();
                up += self.q[i][n] * dn + self.b[i][n] * root;
                lo += self.q[i][n] * dn - self.b[i][n] * root;
            }
            let scale = self.observed[i].max(1.0);
            worst = worst
                .max((self.observed[i] - up) / scale)
                .max((lo - self.observed[i]) / scale);
        }
        let scale = self.total.max(1.0);
        for &dn in d {
            worst = worst.max(-dn / scale).max((dn - self.pulses) / scale);
        }
        if self.cap_total {
            worst = worst.max((d.iter().sum::<f64>() - self.total) / scale);
        }
        worst.max(0.0)
    }
}

/// Minimizes `d_target` over the region described by the transcript.
pub fn solve_min_dn(
    public: &PublicTranscript,
    sources: &[SourceSpec<f64>],
    budget: &EpsilonBudget,
    target: usize,
    options: &SolverOptions,
) -> Result<SolveReport> {
    let sys = DetectionConstraints::new(public, sources, budget, options.cap_total)?;
    solve_constraints(&sys, target, options)
}

pub fn solve_constraints(
    sys: &DetectionConstraints,
    target: usize,
    options: &SolverOptions,
) -> Result<SolveReport> {
    let n_max = sys.n_max();
    if target > n_max {
        return Err(Error::invalid(
            "solver target",
            format!("n = {target} exceeds n_max = {n_max}"),
        ));
    }
    if sys.total == 0.0 || !sys.defined[target] {
        return Ok(SolveReport::fixed(target, 0.0, vec![0.0; n_max + 1]));
    }
    if sys.q.len() == 1 {
        return Ok(single_source(sys, target));
    }
    Barrier::new(sys, target, options).solve()
}

/// One source: every `q_n = 1`, so the constraints pin `sum_n d_n = D`.
fn single_source(sys: &DetectionConstraints, target: usize) -> SolveReport {
    let free: Vec<usize> = (0..=sys.n_max()).filter(|&n| sys.defined[n]).collect();
    let others = (free.len() - 1) as f64;
    if sys.total > sys.pulses * free.len() as f64 {
        return SolveReport::failed(target, SolverStatus::Infeasible, sys.n_max(), 0);
    }
    let value = (sys.total - sys.pulses * others).max(0.0);
    let mut d = vec![0.0; sys.n_max() + 1];
    d[target] = value;
    let mut rest = sys.total - value;
    for &n in free.iter().filter(|&&n| n != target) {
        let take = rest.min(sys.pulses);
        d[n] = take;
        rest -= take;
    }
    SolveReport::fixed(target, value, d)
}

/// Log-barrier method in the scaled variables `z_n = d_n / S`, `S = max(D, 1)`.
///
/// Phase one adds a slack variable `sigma` to every source constraint and
/// drives it below zero to find a strictly feasible point; phase two
/// minimizes `z_target`.
struct Barrier<'a> {
    sys: &'a DetectionConstraints,
    opts: &'a SolverOptions,
    target: usize,
    free: Vec<usize>,
    scale: f64,
    a: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    box_cap: f64,
    steps: usize,
}

#[derive(Clone, Copy)]
enum Phase {
    /// `sigma` is the last variable.
    Feasibility,
    /// Constraints relaxed to `g <= rho`.
    Optimize { rho: f64 },
}

enum Centering {
    Done,
    Budget,
}

struct Eval {
    f: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl<'a> Barrier<'a> {
    fn new(sys: &'a DetectionConstraints, target: usize, opts: &'a SolverOptions) -> Self {
        let free: Vec<usize> = (0..=sys.n_max()).filter(|&n| sys.defined[n]).collect();
        let scale = sys.total.max(1.0);
        let root = scale.sqrt();
        let pick = |rows: &Vec<Vec<f64>>, div: f64| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|row| free.iter().map(|&n| row[n] / div).collect())
                .collect()
        };
        let a = pick(&sys.q, 1.0);
        let beta = pick(&sys.b, root);
        Self {
            sys,
            opts,
            target: free.iter().position(|&n| n == target).expect("target is free"),
            a,
            beta,
            rhs: sys.observed.iter().map(|d| d / scale).collect(),
            box_cap: sys.pulses / scale,
            free,
            scale,
            steps: 0,
        }
    }

    fn barrier_terms(&self) -> usize {
        let m = self.free.len();
        m + if self.sys.cap_total { 1 } else { m } + 2 * self.rhs.len()
    }

    fn solve(mut self) -> Result<SolveReport> {
        let m = self.free.len();
        let n_max = self.sys.n_max();
        let terms = self.barrier_terms() as f64;

        // phase one
        let mut x = DVector::from_element(m + 1, 0.5 / m as f64);
        x[m] = self.max_violation(&x.as_slice()[..m]) + 1.0;
        let mut t = 1.0;
        let rho = loop {
            match self.center(&mut x, t, Phase::Feasibility, true) {
                Centering::Budget => {
                    return Ok(SolveReport::failed(
                        self.free[self.target],
                        SolverStatus::MaxIterations,
                        n_max,
                        self.steps,
                    ))
                }
                Centering::Done => {}
            }
            let sigma = x[m];
            if sigma < 0.0 {
                break 0.0;
            }
            let gap = terms / t;
            if sigma - gap > 1e-10 && gap < 1e-3 * sigma {
                return Ok(SolveReport::failed(
                    self.free[self.target],
                    SolverStatus::Infeasible,
                    n_max,
                    self.steps,
                ));
            }
            if gap < self.opts.gap_tolerance {
                // empty interior: relax just enough to contain this point
                break sigma + self.opts.gap_tolerance;
            }
            t *= 10.0;
        };

        // phase two
        let mut z = DVector::from_column_slice(&x.as_slice()[..m]);
        let phase = Phase::Optimize { rho };
        let mut t = 1.0;
        loop {
            if let Centering::Budget = self.center(&mut z, t, phase, false) {
                return Ok(SolveReport::failed(
                    self.free[self.target],
                    SolverStatus::MaxIterations,
                    n_max,
                    self.steps,
                ));
            }
            if terms / t < self.opts.gap_tolerance {
                break;
            }
            t *= 10.0;
        }
        let gap = terms / t;
        let mut detections = vec![0.0; n_max + 1];
        for (j, &n) in self.free.iter().enumerate() {
            detections[n] = z[j] * self.scale;
        }
        Ok(SolveReport {
            target: self.free[self.target],
            value: ((z[self.target] - gap) * self.scale).max(0.0),
            status: SolverStatus::Optimal,
            residual: self.sys.violation(&detections),
            detections,
            duality_gap: gap * self.scale,
            newton_steps: self.steps,
        })
    }

    /// Largest source-constraint value at `z`.
    fn max_violation(&self, z: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.rhs.len() {
            let (mut lin, mut root) = (0.0, 0.0);
            for (j, &zj) in z.iter().enumerate() {
                lin += self.a[i][j] * zj;
                root += self.beta[i][j] * zj.sqrt();
            }
            worst = worst
                .max(self.rhs[i] - lin - root)
                .max(lin - root - self.rhs[i]);
        }
        worst
    }

    /// Damped Newton on `t * objective + barrier` until the decrement is tiny.
    /// In the feasibility phase, stops early once `sigma < 0`.
    fn center(&mut self, x: &mut DVector<f64>, t: f64, phase: Phase, stop_negative: bool) -> Centering {
        let m = self.free.len();
        loop {
            if stop_negative && x[m] < 0.0 {
                return Centering::Done;
            }
            if self.steps >= self.opts.max_newton_steps {
                return Centering::Budget;
            }
            self.steps += 1;
            let Some(ev) = self.eval(x, t, phase, true) else {
                return Centering::Done;
            };
            let Some(dx) = newton_direction(&ev.hess, &ev.grad) else {
                return Centering::Done;
            };
            let slope = ev.grad.dot(&dx);
            if -slope / 2.0 <= 1e-10 {
                return Centering::Done;
            }
            let mut step = 1.0;
            loop {
                let trial = &*x + &dx * step;
                if let Some(next) = self.eval(&trial, t, phase, false) {
                    // strict decrease guards against accepting rounding noise
                    if next.f < ev.f && next.f <= ev.f + 0.25 * step * slope {
                        *x = trial;
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-20 {
                    return Centering::Done;
                }
            }
        }
    }

    /// Barrier objective; `None` outside the open domain.
    fn eval(&self, x: &DVector<f64>, t: f64, phase: Phase, derivs: bool) -> Option<Eval> {
        let m = self.free.len();
        let dim = x.len();
        let mut f;
        let mut grad = DVector::zeros(if derivs { dim } else { 0 });
        let mut hess = DMatrix::zeros(if derivs { dim } else { 0 }, if derivs { dim } else { 0 });
        let sigma = match phase {
            Phase::Feasibility => {
                f = t * x[m];
                if derivs {
                    grad[m] = t;
                }
                x[m]
            }
            Phase::Optimize { rho } => {
                f = t * x[self.target];
                if derivs {
                    grad[self.target] = t;
                }
                rho
            }
        };

        for j in 0..m {
            let zj = x[j];
            if !(zj > 0.0) {
                return None;
            }
            f -= zj.ln();
            if derivs {
                grad[j] -= 1.0 / zj;
                hess[(j, j)] += 1.0 / (zj * zj);
            }
        }
        if self.sys.cap_total {
            let s = 1.0 - x.rows(0, m).sum();
            if !(s > 0.0) {
                return None;
            }
            f -= s.ln();
            if derivs {
                let inv2 = 1.0 / (s * s);
                for j in 0..m {
                    grad[j] += 1.0 / s;
                    for k in 0..m {
                        hess[(j, k)] += inv2;
                    }
                }
            }
        } else {
            for j in 0..m {
                let s = self.box_cap - x[j];
                if !(s > 0.0) {
                    return None;
                }
                f -= s.ln();
                if derivs {
                    grad[j] += 1.0 / s;
                    hess[(j, j)] += 1.0 / (s * s);
                }
            }
        }

        let roots: Vec<f64> = (0..m).map(|j| x[j].sqrt()).collect();
        let mut ds = DVector::zeros(if derivs { dim } else { 0 });
        for i in 0..self.rhs.len() {
            for upper in [true, false] {
                // slack s = sigma - g(z)
                let sign = if upper { 1.0 } else { -1.0 };
                let mut s = sigma + if upper { -self.rhs[i] } else { self.rhs[i] };
                for j in 0..m {
                    s += sign * self.a[i][j] * x[j] + self.beta[i][j] * roots[j];
                }
                if !(s > 0.0) {
                    return None;
                }
                f -= s.ln();
                if derivs {
                    for j in 0..m {
                        ds[j] = sign * self.a[i][j] + self.beta[i][j] / (2.0 * roots[j]);
                    }
                    if let Phase::Feasibility = phase {
                        ds[m] = 1.0;
                    }
                    let inv = 1.0 / s;
                    grad.axpy(-inv, &ds, 1.0);
                    hess.ger(inv * inv, &ds, &ds, 1.0);
                    for j in 0..m {
                        // s'' = -beta / (4 z^1.5)
                        hess[(j, j)] += inv * self.beta[i][j] / (4.0 * x[j] * roots[j]);
                    }
                }
            }
        }
        Some(Eval { f, grad, hess })
    }
}

/// Solves `H dx = -g` by Cholesky on the diagonally scaled system, adding a
/// small ridge if the factorization fails.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let scale: DVector<f64> = hess.diagonal().map(|h| 1.0 / h.max(f64::MIN_POSITIVE).sqrt());
    let mut scaled = hess.clone();
    for j in 0..n {
        for k in 0..n {
            scaled[(j, k)] *= scale[j] * scale[k];
        }
    }
    let rhs = -grad.component_mul(&scale);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = scaled.clone();
        for j in 0..n {
            m[(j, j)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let y = ch.solve(&rhs);
            if y.iter().all(|v| v.is_finite()) {
                return Some(y.component_mul(&scale));
            }
        }
        ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
    }
    None
}
