//! Principal branch of the Lambert W function and the scalar solve for
//! the proposal scaling `alpha`.

use crate::error::{Error, Result};

const INV_E: f64 = 0.367_879_441_171_442_33;
/// Arguments this close to the branch point are treated as the branch point.
pub const BRANCH_TOL: f64 = 1e-9;
const TOL: f64 = 1e-12;
const MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambertW {
    pub value: f64,
    /// The argument lay below `-1/e` by more than rounding and was clamped.
    pub clamped: bool,
}

fn initial_guess(z: f64) -> f64 {
    if z < -0.25 {
        // Series about the branch point.
        let p = (2.0 * (std::f64::consts::E * z + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if z < 3.0 {
        let l = (1.0 + z).ln();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// `W0(z)` by Halley iteration.
pub fn lambert_w0(z: f64) -> Result<LambertW> {
    if !z.is_finite() {
        return Err(Error::LambertNoConvergence(z));
    }
    let clamped = z < -INV_E - BRANCH_TOL;
    if z <= -INV_E + BRANCH_TOL {
        return Ok(LambertW { value: -1.0, clamped });
    }
    if z == 0.0 {
        return Ok(LambertW { value: 0.0, clamped });
    }
    let mut w = initial_guess(z);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = (w - step).max(-1.0);
        if (next - w).abs() <= TOL * (1.0 + next.abs()) {
            return Ok(LambertW { value: next, clamped });
        }
        w = next;
    }
    Err(Error::LambertNoConvergence(z))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaSolution {
    pub alpha: f64,
    pub clamped: bool,
}

/// Solve `(alpha - 1) gamma - n log(alpha) = c_star` on the branch
/// `alpha <= 1`.
pub fn solve_alpha(c_star: f64, gamma: f64, n: f64) -> Result<AlphaSolution> {
    if !(gamma > 0.0 && n > 0.0 && c_star.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha solve needs gamma > 0, N > 0 and finite c*, got ({c_star}, {gamma}, {n})"
        )));
    }
    let x = gamma / n;
    let z = -(x.ln() - x - c_star / n).exp();
    let w = lambert_w0(z)?;
    Ok(AlphaSolution {
        alpha: -w.value / x,
        clamped: w.clamped,
    })
}

/// Left-hand side of the scalar equation, for residual checks.
pub fn alpha_residual(alpha: f64, c_star: f64, gamma: f64, n: f64) -> f64 {
    (alpha - 1.0) * gamma - n * alpha.ln() - c_star
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(lambert_w0(0.0).unwrap().value, 0.0);
        let omega = 0.567_143_290_409_783_8;
        assert!((lambert_w0(1.0).unwrap().value - omega).abs() < 1e-14);
        assert!((lambert_w0(std::f64::consts::E).unwrap().value - 1.0).abs() < 1e-14);
        assert_eq!(lambert_w0(-INV_E).unwrap().value, -1.0);
        let w = lambert_w0(-0.5).unwrap();
        assert!(w.clamped && w.value == -1.0);
        let w = lambert_w0(-0.2).unwrap().value;
        assert!((w * w.exp() + 0.2).abs() < 1e-15);
    }

    #[test]
    fn alpha_fixed_point() {
        for n in [100.0, 500.0, 18_000.0] {
            assert_eq!(solve_alpha(0.0, n, n).unwrap().alpha, 1.0);
        }
    }

    #[test]
    fn positive_c_star_gives_alpha_below_one() {
        let a = solve_alpha(5.0, 200.0, 200.0).unwrap().alpha;
        assert!(a < 1.0);
        assert!(alpha_residual(a, 5.0, 200.0, 200.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn w_inverts(z in -0.3678f64..50.0) {
            let w = lambert_w0(z).unwrap().value;
            prop_assert!((w * w.exp() - z).abs() <= 1e-12 * (1.0 + z.abs()));
            prop_assert!(w >= -1.0);
        }

        #[test]
        fn alpha_residual_vanishes(c in 0.0f64..50.0, x in 0.8f64..1.2, n in 50.0f64..20_000.0) {
            let gamma = x * n;
            let a = solve_alpha(c, gamma, n).unwrap().alpha;
            prop_assert!(a > 0.0 && a <= 1.0 + 1e-12);
            // The equation is flat near alpha = 1; compare residual to its scale.
            prop_assert!(alpha_residual(a, c, gamma, n).abs() <= 1e-6 * (1.0 + c + gamma));
        }

        #[test]
        fn alpha_decreases_in_c_star(c in 0.0f64..20.0, dc in 0.01f64..5.0, x in 0.9f64..1.1) {
            let n = 500.0;
            let a1 = solve_alpha(c, x * n, n).unwrap().alpha;
            let a2 = solve_alpha(c + dc, x * n, n).unwrap().alpha;
            prop_assert!(a2 < a1);
        }
    }
}
