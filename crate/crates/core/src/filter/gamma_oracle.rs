//! Independent solver for `alpha` from the incomplete gamma form of the
//! equal-weight condition:
//!
//! `P(N/2, alpha gamma / 2) = exp(-c*/2) P(N/2, gamma / 2)`
//!
//! with `P` the regularized lower incomplete gamma function. Only usable at
//! moderate `N` and kept for validation.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

fn ln_p(s: f64, x: f64) -> f64 {
    gamma_lr(s, x).ln()
}

/// Derivative of `ln P(s, x)` with respect to `x`.
fn d_ln_p(s: f64, x: f64) -> f64 {
    ((s - 1.0) * x.ln() - x - ln_gamma(s) - ln_p(s, x)).exp()
}

pub fn gamma_residual(alpha: f64, c_star: f64, gamma: f64, n: f64) -> f64 {
    let s = 0.5 * n;
    ln_p(s, 0.5 * alpha * gamma) - ln_p(s, 0.5 * gamma) + 0.5 * c_star
}

/// Newton iteration on `ln P`, safeguarded by a bracket on `(0, 1]`.
pub fn solve_alpha_gamma(c_star: f64, gamma: f64, n: f64) -> Result<f64> {
    if !(gamma > 0.0 && n > 0.0 && c_star >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma oracle needs c* >= 0, gamma > 0, N > 0, got ({c_star}, {gamma}, {n})"
        )));
    }
    if c_star == 0.0 {
        return Ok(1.0);
    }
    let s = 0.5 * n;
    let f = |a: f64| gamma_residual(a, c_star, gamma, n);
    // f is increasing in alpha, positive at 1 and tends to -inf at 0.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut a = 0.5;
    for _ in 0..200 {
        let fa = f(a);
        if !fa.is_finite() {
            lo = a;
            a = 0.5 * (lo + hi);
            continue;
        }
        if fa.abs() < 1e-13 {
            return Ok(a);
        }
        if fa > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        let slope = 0.5 * gamma * d_ln_p(s, 0.5 * a * gamma);
        let mut next = a - fa / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - a).abs() < 1e-15 {
            return Ok(next);
        }
        a = next;
    }
    Err(Error::AlphaNoConvergence { c_star, gamma })
}
