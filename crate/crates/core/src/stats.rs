//! Probability primitives: Poisson and binomial laws, the Chernoff tail
//! machinery used to size confidence intervals, binary entropy, and the law
//! of total variance.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};

use crate::error::{Error, Result};
use crate::scalar::{Field, Real};

/// `ln(n!)`.
///
/// Exact product below 20, Stirling series with terms through `n^-9` above;
/// the truncation error at `n = 20` is below `1e-17`.
pub fn ln_factorial<T: Real>(n: u64) -> T {
    if n < 20 {
        let mut prod = 1.0f64;
        for k in 2..=n {
            prod *= k as f64;
        }
        return T::lit(prod.ln());
    }
    let x = T::from_count(n);
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv
        * (T::lit(1.0 / 12.0)
            - inv2
                * (T::lit(1.0 / 360.0)
                    - inv2
                        * (T::lit(1.0 / 1260.0)
                            - inv2 * (T::lit(1.0 / 1680.0) - inv2 * T::lit(1.0 / 1188.0)))));
    x * x.ln() - x + T::lit(0.5) * (T::TAU() * x).ln() + series
}

/// Poisson probability `e^-mu mu^n / n!`, evaluated in log space.
pub fn poisson_pmf<T: Real>(n: u64, mu: T) -> Result<T> {
    if !(mu >= T::zero()) || !mu.is_finite() {
        return Err(Error::domain("mu", mu.to_f64().unwrap_or(f64::NAN), "[0, inf)"));
    }
    if mu == T::zero() {
        return Ok(if n == 0 { T::one() } else { T::zero() });
    }
    if n == 0 {
        return Ok((-mu).exp());
    }
    Ok((T::from_count(n) * mu.ln() - mu - ln_factorial::<T>(n)).exp())
}

/// Upper tail `Pr[N > n]` of a Poisson law, summed term by term.
pub fn poisson_tail<T: Real>(n: u64, mu: T) -> Result<T> {
    let mut term = poisson_pmf(n + 1, mu)?;
    let mut sum = T::zero();
    let mut m = n + 1;
    while term > T::zero() {
        sum += term;
        m += 1;
        term *= mu / T::from_count(m);
        if term < sum * T::epsilon() * T::lit(1e-3) && T::from_count(m) > mu {
            break;
        }
    }
    Ok(sum)
}

/// `ln n! - [(n + 1/2) ln n - n + ln sqrt(2 pi)]`, for `n >= 1`.
fn stirling_error<T: Real>(n: u64) -> T {
    let x = T::from_count(n);
    if n < 16 {
        return ln_factorial::<T>(n) - ((x + T::lit(0.5)) * x.ln() - x + T::lit(0.5) * T::TAU().ln());
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    inv * (T::lit(1.0 / 12.0)
        - inv2
            * (T::lit(1.0 / 360.0)
                - inv2
                    * (T::lit(1.0 / 1260.0)
                        - inv2 * (T::lit(1.0 / 1680.0) - inv2 * T::lit(1.0 / 1188.0)))))
}

/// Deviance term `x ln(x / m) + m - x`, without cancellation when `x ~ m`.
fn deviance<T: Real>(x: T, m: T) -> T {
    if (x - m).abs() < T::lit(0.1) * (x + m) {
        let v = (x - m) / (x + m);
        let v2 = v * v;
        let mut s = (x - m) * v;
        let mut ej = T::lit(2.0) * x * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / T::from_count(2 * j + 1);
            if next == s {
                break;
            }
            s = next;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln Pr[X = k]` for `X ~ Binomial(n, p)`.
///
/// Saddle-point form (Stirling remainders plus deviances), which keeps full
/// relative accuracy at large `n` where differences of `ln n!` would not.
pub fn ln_binomial_pmf<T: Real>(k: u64, n: u64, p: T) -> T {
    if k > n {
        return T::neg_infinity();
    }
    if p == T::zero() {
        return if k == 0 { T::zero() } else { T::neg_infinity() };
    }
    if p == T::one() {
        return if k == n { T::zero() } else { T::neg_infinity() };
    }
    let nf = T::from_count(n);
    if k == 0 {
        return nf * (-p).ln_1p();
    }
    if k == n {
        return nf * p.ln();
    }
    let kf = T::from_count(k);
    let rest = T::from_count(n - k);
    let q = T::one() - p;
    let lc = stirling_error::<T>(n)
        - stirling_error::<T>(k)
        - stirling_error::<T>(n - k)
        - deviance(kf, nf * p)
        - deviance(rest, nf * q);
    let lf = T::TAU().ln() + kf.ln() + (-kf / nf).ln_1p();
    lc - T::lit(0.5) * lf
}

/// Draw from `Binomial(trials, p)`.
///
/// Exact for every trial count (BINV inversion for small means, BTPE
/// otherwise), so pulse counts of order `1e10` cost O(1).
pub fn binomial_sample<R: Rng + ?Sized>(trials: u64, p: f64, rng: &mut R) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("p", p, "[0, 1]"));
    }
    if trials == 0 || p == 0.0 {
        return Ok(0);
    }
    if p == 1.0 {
        return Ok(trials);
    }
    let law = Binomial::new(trials, p).map_err(|e| Error::domain("p", p, leak(e)))?;
    Ok(law.sample(rng))
}

/// Number of marked items in `draws` draws without replacement from a
/// population of `population` containing `marked` marked items.
pub fn hypergeometric_sample<R: Rng + ?Sized>(
    population: u64,
    marked: u64,
    draws: u64,
    rng: &mut R,
) -> Result<u64> {
    if marked > population || draws > population {
        return Err(Error::invalid(
            "hypergeometric draw",
            format!("marked = {marked}, draws = {draws}, population = {population}"),
        ));
    }
    if draws == 0 || marked == 0 {
        return Ok(0);
    }
    if marked == population {
        return Ok(draws);
    }
    if draws == population {
        return Ok(marked);
    }
    let reduced_mean = marked.min(population - marked) as f64 * draws.min(population - draws) as f64
        / population as f64;
    if reduced_mean < 10.0 {
        return hypergeometric_inversion(population, marked, draws, rng);
    }
    let law = Hypergeometric::new(population, marked, draws)
        .map_err(|e| Error::invalid("hypergeometric draw", e.to_string()))?;
    Ok(law.sample(rng))
}

/// Inverse-transform sampling from zero for small means. `rand_distr` uses
/// the same method there, but its set-up is linear in the sample size and
/// its start probability underflows at very large populations.
fn hypergeometric_inversion<R: Rng + ?Sized>(
    population: u64,
    marked: u64,
    draws: u64,
    rng: &mut R,
) -> Result<u64> {
    // reduce to marked, draws <= population / 2
    if 2 * marked > population {
        return Ok(draws - hypergeometric_inversion(population, population - marked, draws, rng)?);
    }
    if 2 * draws > population {
        return Ok(marked - hypergeometric_inversion(population, marked, population - draws, rng)?);
    }
    let (short, long) = (marked.min(draws), marked.max(draws));
    let n = population as f64;
    // Pr(X = 0) = prod_{j < short} (1 - long / (N - j))
    let ln_p0: f64 = (0..short).map(|j| (-(long as f64) / (n - j as f64)).ln_1p()).sum();
    let mut p = ln_p0.exp();
    if p == 0.0 {
        return Err(Error::invalid(
            "hypergeometric draw",
            format!("mean too large for inversion: N = {population}, M = {marked}, n = {draws}"),
        ));
    }
    let (m, k) = (marked as f64, draws as f64);
    let mut u: f64 = rng.random();
    let mut x = 0u64;
    while u > p && x < short {
        u -= p;
        let xf = x as f64;
        p *= (m - xf) * (k - xf) / ((xf + 1.0) * (n - m - k + xf + 1.0));
        x += 1;
    }
    Ok(x)
}

/// Split `trials` across categories with the given probabilities.
///
/// Probabilities are renormalised over the remaining mass at every step, so
/// small rounding in `probs` never produces a negative remainder; the last
/// category with positive probability absorbs whatever is left.
pub fn multinomial_sample<R: Rng + ?Sized>(
    trials: u64,
    probs: &[f64],
    rng: &mut R,
) -> Result<Vec<u64>> {
    if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::domain("category probability", bad, "[0, 1]"));
    }
    let mut out = vec![0u64; probs.len()];
    let Some(last) = probs.iter().rposition(|&p| p > 0.0) else {
        if trials == 0 {
            return Ok(out);
        }
        return Err(Error::invalid("multinomial", "all category probabilities are zero"));
    };
    let mut left = trials;
    let mut mass: f64 = probs[..=last].iter().sum();
    for (slot, &p) in out.iter_mut().zip(probs).take(last) {
        if left == 0 {
            break;
        }
        let ratio = if mass > 0.0 { (p / mass).min(1.0) } else { 0.0 };
        let k = binomial_sample(left, ratio, rng)?;
        *slot = k;
        left -= k;
        mass -= p;
    }
    out[last] += left;
    Ok(out)
}

fn leak(e: rand_distr::BinomialError) -> &'static str {
    match e {
        rand_distr::BinomialError::ProbabilityTooSmall => "p >= 0",
        rand_distr::BinomialError::ProbabilityTooLarge => "p <= 1",
        _ => "valid binomial parameters",
    }
}

/// Confidence multiplier and the error probability it certifies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailBoundParams<T> {
    pub c: T,
    pub epsilon: T,
}

impl<T: Real> TailBoundParams<T> {
    pub fn from_epsilon(epsilon: T) -> Result<Self> {
        Ok(Self {
            c: chernoff_c(epsilon)?,
            epsilon,
        })
    }
}

/// Multiplier `c = 2 sqrt(|ln eps|)` for which a deviation of `c` standard
/// deviations above the mean has probability at most `eps`.
pub fn chernoff_c<T: Real>(epsilon: T) -> Result<T> {
    if !(epsilon > T::zero() && epsilon <= T::one()) {
        return Err(Error::domain(
            "epsilon",
            epsilon.to_f64().unwrap_or(f64::NAN),
            "(0, 1]",
        ));
    }
    Ok(T::lit(2.0) * epsilon.ln().abs().sqrt())
}

/// Chernoff bound on `Pr[X > k]`, `X ~ Binomial(n, a)`:
/// `exp{-(k - na)^2 / (4 a (1-a) n)}` at or above the mean, 1 below it.
pub fn chernoff_binomial_tail_bound<T: Real>(k: T, n: u64, a: T) -> Result<T> {
    if !(a > T::zero() && a < T::one()) {
        return Err(Error::domain("a", a.to_f64().unwrap_or(f64::NAN), "(0, 1)"));
    }
    if n == 0 {
        return Err(Error::domain("n", 0.0, "[1, inf)"));
    }
    let n = T::from_count(n);
    let mean = n * a;
    if k < mean {
        return Ok(T::one());
    }
    let dev = k - mean;
    Ok((-(dev * dev) / (T::lit(4.0) * a * (T::one() - a) * n)).exp())
}

/// Shannon entropy of a Bernoulli(x) variable, in bits.
pub fn binary_entropy<T: Real>(x: T) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::domain("x", x.to_f64().unwrap_or(f64::NAN), "[0, 1]"));
    }
    let h = |p: T| if p > T::zero() { -p * p.log2() } else { T::zero() };
    Ok(h(x) + h(T::one() - x))
}

/// Finite joint law of `(X, Y)` over `{0..rows} x {0..cols}`; `mass[x][y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPmf<T> {
    mass: Vec<Vec<T>>,
}

impl<T: Field> JointPmf<T> {
    /// Validates shape, non-negativity and normalisation (to `1e-12`).
    pub fn new(mass: Vec<Vec<T>>) -> Result<Self> {
        let cols = mass.first().map_or(0, Vec::len);
        if mass.is_empty() || cols == 0 {
            return Err(Error::invalid("joint distribution", "empty support"));
        }
        if mass.iter().any(|row| row.len() != cols) {
            return Err(Error::invalid("joint distribution", "rows of unequal length"));
        }
        if mass.iter().flatten().any(|p| *p < T::zero()) {
            return Err(Error::invalid("joint distribution", "negative probability"));
        }
        let total = mass
            .iter()
            .flatten()
            .fold(T::zero(), |acc, p| acc + p.clone());
        let tol = T::from_f64(1e-12).expect("tolerance representable");
        if (total.clone() - T::one()).abs() > tol {
            return Err(Error::invalid(
                "joint distribution",
                format!("total mass {total:?} differs from 1 by more than 1e-12"),
            ));
        }
        Ok(Self { mass })
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.mass
    }
}

/// Both sides of `Var[Y] = E[Var(Y|X)] + Var(E[Y|X])`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceDecomposition<T> {
    /// `Var[Y]`, from the marginal of `Y`.
    pub total: T,
    /// `E[Var(Y|X)]`.
    pub expected_conditional: T,
    /// `Var(E[Y|X])`.
    pub variance_of_conditional_mean: T,
}

impl<T: Field> VarianceDecomposition<T> {
    pub fn rhs(&self) -> T {
        self.expected_conditional.clone() + self.variance_of_conditional_mean.clone()
    }
}

/// Evaluates both sides of the law of total variance on an explicit joint.
///
/// All moments are centred (two-pass), so in floating point the two sides
/// agree to a few ulps of `Var[Y]`; with exact scalars they agree exactly.
pub fn total_variance_decompose<T: Field>(joint: &JointPmf<T>) -> VarianceDecomposition<T> {
    let rows = joint.rows();
    let cols = rows[0].len();
    let value = |i: usize| T::from_usize(i).expect("index representable");

    let mut marginal_y = vec![T::zero(); cols];
    for row in rows {
        for (acc, p) in marginal_y.iter_mut().zip(row) {
            *acc = acc.clone() + p.clone();
        }
    }
    let mean_y = marginal_y
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (y, p)| acc + p.clone() * value(y));
    let total = marginal_y.iter().enumerate().fold(T::zero(), |acc, (y, p)| {
        let d = value(y) - mean_y.clone();
        acc + p.clone() * d.clone() * d
    });

    let mut expected_conditional = T::zero();
    let mut variance_of_conditional_mean = T::zero();
    for row in rows {
        let fx = row.iter().fold(T::zero(), |acc, p| acc + p.clone());
        if fx == T::zero() {
            continue;
        }
        let cond_mean = row
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (y, p)| acc + p.clone() * value(y))
            / fx.clone();
        let cond_var = row.iter().enumerate().fold(T::zero(), |acc, (y, p)| {
            let d = value(y) - cond_mean.clone();
            acc + p.clone() * d.clone() * d
        }) / fx.clone();
        expected_conditional = expected_conditional + fx.clone() * cond_var;
        let d = cond_mean - mean_y.clone();
        variance_of_conditional_mean = variance_of_conditional_mean + fx * d.clone() * d;
    }

    VarianceDecomposition {
        total,
        expected_conditional,
        variance_of_conditional_mean,
    }
}
