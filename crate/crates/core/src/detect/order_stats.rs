//! Extreme-ratio law of iid Gamma order statistics and threshold calibration.
//!
//! For `γ_1..γ_n` iid `Gamma(ϱ, ς²)` the probability that the largest exceeds
//! `β` times the smallest does not depend on the scale `ς²`, so everything
//! here is evaluated at unit scale. The inner integral over the maximum has
//! the closed form `[(F(y) − F(x))^{n−1}/(n−1)]`, leaving
//!
//! `P = n ∫ f(x) [ Q(x)^{n−1} − (Q(x) − Q(βx))^{n−1} ] dx`,
//!
//! with `Q = 1 − F` the regularized upper incomplete Gamma function. The
//! bracket is evaluated as `Q^{n−1} (1 − (1 − Q(βx)/Q(x))^{n−1})` in the log
//! domain so that shapes in the hundreds neither overflow nor cancel.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use super::quadrature::{integrate, Tolerance};
use crate::{Error, Result};

fn check_shape(shape: f64, n: usize) -> Result<()> {
    if !(shape.is_finite() && shape >= 1.0) {
        return Err(Error::InvalidArgument(format!("shape must be >= 1, got {shape}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least two statistics, got {n}")));
    }
    Ok(())
}

/// Outer integration range: ±10 standard deviations around the mean, clipped at 0.
fn support(shape: f64) -> (f64, f64) {
    let s = shape.sqrt();
    ((shape - 10.0 * s).max(0.0), shape + 10.0 * s)
}

fn ln_pdf(x: f64, shape: f64, ln_norm: f64) -> f64 {
    if x <= 0.0 {
        return if shape == 1.0 { -ln_norm } else { f64::NEG_INFINITY };
    }
    (shape - 1.0) * x.ln() - x - ln_norm
}

/// `P(γ_(n) > β γ_(1))` for `n` iid `Gamma(shape, 1)` variables.
pub fn fwer_theoretical(beta: f64, shape: f64, n: usize) -> Result<f64> {
    check_shape(shape, n)?;
    if !(beta >= 1.0) {
        return Err(Error::InvalidArgument(format!("beta must be >= 1, got {beta}")));
    }
    if beta.is_infinite() {
        return Ok(0.0);
    }
    let ln_norm = ln_gamma(shape);
    let m = (n - 1) as f64;
    let integrand = |x: f64| {
        let q = gamma_ur(shape, x);
        if q <= 0.0 {
            return 0.0;
        }
        let r = (gamma_ur(shape, beta * x) / q).min(1.0);
        let bracket = -(m * (-r).ln_1p()).exp_m1();
        if bracket <= 0.0 {
            return 0.0;
        }
        (ln_pdf(x, shape, ln_norm) + m * q.ln() + bracket.ln()).exp()
    };
    let (lo, hi) = support(shape);
    let tol = Tolerance {
        abs: 1e-15,
        rel: 1e-10,
        max_intervals: 4000,
    };
    let q = integrate(integrand, lo, hi, tol)?;
    Ok((n as f64 * q.value).clamp(0.0, 1.0))
}

/// Smallest `β ≥ 1` with `fwer_theoretical(β) ≤ δ`, by bisection to 1e-7.
pub fn calibrate_beta(delta: f64, shape: f64, n: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    check_shape(shape, n)?;
    let mut lo = 1.0;
    let mut hi = 2.0;
    while fwer_theoretical(hi, shape, n)? > delta {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::InvalidArgument(format!(
                "no threshold below 1e8 reaches delta = {delta}"
            )));
        }
    }
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if fwer_theoretical(mid, shape, n)? <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Tail probability of the ratio statistic `γ_i / γ_(1)` at observed value `z`:
/// `(n−1) ∫_0^1 (1 − F(z F^{-1}(1−w))) w^{n−2} dw`, evaluated after the
/// substitution `w = Q(u)` as `(n−1) ∫ f(u) Q(z u) Q(u)^{n−2} du`.
pub fn p_value(z: f64, shape: f64, n: usize) -> Result<f64> {
    check_shape(shape, n)?;
    if !(z >= 1.0) {
        return Err(Error::InvalidArgument(format!("ratio statistic must be >= 1, got {z}")));
    }
    if z.is_infinite() {
        return Ok(0.0);
    }
    let ln_norm = ln_gamma(shape);
    let m = (n - 2) as f64;
    let integrand = |u: f64| {
        let q = gamma_ur(shape, u);
        let qz = gamma_ur(shape, z * u);
        if q <= 0.0 || qz <= 0.0 {
            return 0.0;
        }
        (ln_pdf(u, shape, ln_norm) + qz.ln() + m * q.ln()).exp()
    };
    let (lo, hi) = support(shape);
    let q = integrate(integrand, lo, hi, Tolerance::default())?;
    Ok(((n - 1) as f64 * q.value).clamp(0.0, 1.0))
}

/// Monte Carlo estimate of `P(γ_(n) > β γ_(1))` with `Gamma(shape, scale)`
/// draws; returns (estimate, binomial standard error).
pub fn fwer_monte_carlo<R: Rng + ?Sized>(
    beta: f64,
    shape: f64,
    n: usize,
    scale: f64,
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_shape(shape, n)?;
    let dist = Gamma::new(shape, scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut hits = 0usize;
    for _ in 0..draws {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..n {
            let g: f64 = dist.sample(rng);
            lo = lo.min(g);
            hi = hi.max(g);
        }
        if hi > beta * lo {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    Ok((p, (p * (1.0 - p) / draws as f64).sqrt()))
}

/// Memo of calibrated thresholds keyed by (δ, shape, n). Calibration is
/// deterministic, so sharing one cache across threads does not affect results.
#[derive(Debug, Default)]
pub struct BetaCache {
    table: Mutex<HashMap<(u64, u64, usize), f64>>,
}

impl BetaCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn beta(&self, delta: f64, shape: f64, n: usize) -> Result<f64> {
        let key = (delta.to_bits(), shape.to_bits(), n);
        if let Some(&b) = self.table.lock().expect("cache lock").get(&key) {
            return Ok(b);
        }
        let b = calibrate_beta(delta, shape, n)?;
        self.table.lock().expect("cache lock").insert(key, b);
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.table.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
