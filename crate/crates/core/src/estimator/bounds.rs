//! Confidence maps between a true count `d` and the observed count `u` it
//! can produce, and their inverses.
//!
//! With `s = q (1 - q)`, the observation satisfies
//! `q d - c sqrt(s d) <= u <= q d + c sqrt(s d)` except with the probability
//! certified by `c`.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams<T> {
    pub q: T,
    pub c: T,
}

impl<T: Real> BoundParams<T> {
    pub fn new(q: T, c: T) -> Result<Self> {
        if !(q > T::zero() && q < T::one()) {
            return Err(Error::domain("q", q.to_f64().unwrap_or(f64::NAN), "(0, 1)"));
        }
        if !(c >= T::zero()) {
            return Err(Error::domain("c", c.to_f64().unwrap_or(f64::NAN), "[0, inf)"));
        }
        Ok(Self { q, c })
    }

    fn spread(&self) -> T {
        self.c * (self.q * (T::one() - self.q)).sqrt()
    }

    /// `sqrt(c^2 + 4 u / (1 - q))`.
    fn root(&self, u: T) -> T {
        (self.c * self.c + T::lit(4.0) * u / (T::one() - self.q)).sqrt()
    }
}

/// `q d + c sqrt(q (1 - q) d)`.
pub fn forward_upper<T: Real>(d: T, p: &BoundParams<T>) -> T {
    p.q * d + p.spread() * d.sqrt()
}

/// `q d - c sqrt(q (1 - q) d)`; increasing only for `d >= c^2 (1 - q) / (4 q)`.
pub fn forward_lower<T: Real>(d: T, p: &BoundParams<T>) -> T {
    p.q * d - p.spread() * d.sqrt()
}

/// Smallest `d` whose upper map reaches `u`: the inverse of [`forward_upper`].
pub fn phi_lower<T: Real>(u: T, p: &BoundParams<T>) -> T {
    // u/q - c(1-q)/(2q) (r - c), with r - c rewritten to avoid cancellation
    let r = p.root(u);
    let four = T::lit(4.0);
    four * u * u / (p.q * (T::one() - p.q) * (r + p.c) * (r + p.c))
}

/// Largest `d` whose lower map stays at `u`: the inverse of [`forward_lower`]
/// on its increasing branch.
pub fn phi_upper<T: Real>(u: T, p: &BoundParams<T>) -> T {
    let two = T::lit(2.0);
    u / p.q + p.c * (T::one() - p.q) / (two * p.q) * (p.root(u) + p.c)
}
