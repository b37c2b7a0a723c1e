//! Improper integrals over the line, half-line, and finite intervals via
//! double-exponential (tanh-sinh family) transformations.
//!
//! These rules drive the closed-form side of weak-limit comparisons, where
//! the integrand may decay slowly at infinity (like `1/(1+x^2)`) or carry
//! an integrable endpoint singularity (like `x^{-1/2}` at 0). The
//! double-exponential substitution turns all of these into trapezoidal sums
//! that converge geometrically in the level; levels are doubled until two
//! successive sums agree to the requested tolerance.

use crate::error::{Error, Result};
use crate::numerics::ksum;

/// Relative agreement demanded between successive refinement levels.
const DEFAULT_TOL: f64 = 1e-11;

/// Deepest refinement level (trapezoidal step `h = 2^-level`).
const MAX_LEVEL: u32 = 12;

/// Truncation range of the transformed variable: beyond |t| = 7 the
/// double-exponential factor has underflowed for all three substitutions
/// (the per-point guards skip any overflowed/underflowed evaluations).
const T_CUT: f64 = 7.0;

fn refine(
    mut point: impl FnMut(f64) -> Option<(f64, f64)>,
    context: &'static str,
    tol: f64,
) -> Result<f64> {
    // Trapezoidal sums over t = k*h, reusing coarser levels: at each new
    // level only odd multiples of the new step are added.
    let mut h = 1.0f64;
    let mut terms: Vec<f64> = Vec::new();
    let center = point(0.0).map(|(f, w)| f * w).unwrap_or(0.0);
    terms.push(center);
    let mut k = 1.0f64;
    while k * h <= T_CUT {
        for t in [k * h, -k * h] {
            if let Some((f, w)) = point(t) {
                terms.push(f * w);
            }
        }
        k += 1.0;
    }
    let mut prev = h * ksum(terms.iter().copied());
    for _ in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1.0f64;
        while k * h <= T_CUT {
            for t in [k * h, -k * h] {
                if let Some((f, w)) = point(t) {
                    terms.push(f * w);
                }
            }
            k += 2.0;
        }
        let cur = h * ksum(terms.iter().copied());
        if (cur - prev).abs() <= tol * (1.0 + cur.abs()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::IntegralNotConverged(format!("{context} unstable after {MAX_LEVEL} levels")))
}

/// `∫_{-∞}^{∞} f(x) dx` by the sinh-sinh substitution
/// `x = sinh((π/2)·sinh t)`. The integrand must decay at infinity at least
/// like an integrable power.
pub fn integrate_real_line(f: impl Fn(f64) -> f64, tol: Option<f64>) -> Result<f64> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    refine(
        |t| {
            let s = half_pi * t.sinh();
            let x = s.sinh();
            let w = half_pi * t.cosh() * s.cosh();
            if !x.is_finite() || !w.is_finite() {
                return None;
            }
            let fv = f(x);
            if fv == 0.0 || !fv.is_finite() {
                return None;
            }
            Some((fv, w))
        },
        "real-line integral",
        tol.unwrap_or(DEFAULT_TOL),
    )
}

/// `∫_0^{∞} f(x) dx` by the exp-sinh substitution `x = exp((π/2)·sinh t)`.
/// Handles integrable algebraic singularities at 0 (for example
/// `x^{-1/2}`) without special treatment, because the substitution places
/// nodes double-exponentially close to the endpoint.
pub fn integrate_half_line(f: impl Fn(f64) -> f64, tol: Option<f64>) -> Result<f64> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    refine(
        |t| {
            let s = half_pi * t.sinh();
            let x = s.exp();
            let w = half_pi * t.cosh() * x;
            if x == 0.0 || !x.is_finite() || !w.is_finite() {
                return None;
            }
            let fv = f(x);
            if fv == 0.0 || !fv.is_finite() {
                return None;
            }
            Some((fv, w))
        },
        "half-line integral",
        tol.unwrap_or(DEFAULT_TOL),
    )
}

/// `∫_a^b f(x) dx` by the tanh-sinh substitution; tolerates integrable
/// endpoint singularities at either end. Because `f` receives the plain
/// abscissa, an integrand that internally subtracts an endpoint (like
/// `1/sqrt(1-x)` near 1) loses half the mantissa at the closest nodes; the
/// achievable accuracy for such integrands is ~1e-8 absolute, not the
/// smooth-case 1e-11.
pub fn integrate_finite(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: Option<f64>) -> Result<f64> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidInput(format!("bad finite interval [{a}, {b}]")));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let half = 0.5 * (b - a);
    refine(
        |t| {
            let s = half_pi * t.sinh();
            // Distance of tanh(s) from the nearer of ±1, computed without
            // the saturation of tanh itself: 1 - |tanh s| = 2e^{-2|s|}/(1+e^{-2|s|}).
            let em = (-2.0 * s.abs()).exp();
            let d = 2.0 * em / (1.0 + em);
            let x = if s >= 0.0 { b - half * d } else { a + half * d };
            // Skip points rounded exactly onto an endpoint: any integrable
            // singularity there is covered by the nodes just inside.
            if x <= a || x >= b {
                return None;
            }
            let w = half * half_pi * t.cosh() / (s.cosh() * s.cosh());
            if !w.is_finite() || w == 0.0 {
                return None;
            }
            let fv = f(x);
            if fv == 0.0 || !fv.is_finite() {
                return None;
            }
            Some((fv, w))
        },
        "finite-interval integral",
        tol.unwrap_or(DEFAULT_TOL),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cauchy_density_integrates_to_one_over_the_line() {
        let v = integrate_real_line(|x| 1.0 / (PI * (1.0 + x * x)), None).unwrap();
        assert!((v - 1.0).abs() < 1e-11, "got {v}");
    }

    #[test]
    fn gaussian_integrates_to_sqrt_pi() {
        let v = integrate_real_line(|x| (-x * x).exp(), None).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-11, "got {v}");
    }

    #[test]
    fn half_line_handles_inverse_square_root_singularity() {
        // ∫_0^∞ x^{-1/2} / (1+x²) dx = π/√2.
        let v = integrate_half_line(|x| 1.0 / (x.sqrt() * (1.0 + x * x)), None).unwrap();
        assert!((v - PI / 2.0f64.sqrt()).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn half_line_exponential_decay() {
        let v = integrate_half_line(|x| (-x).exp(), None).unwrap();
        assert!((v - 1.0).abs() < 1e-11, "got {v}");
    }

    #[test]
    fn finite_interval_with_endpoint_singularities() {
        // ∫_0^1 dx/√(x(1-x)) = π. The 1-x subtraction inside f caps the
        // accuracy near the right endpoint (see the rule's documentation).
        let v = integrate_finite(|x| 1.0 / (x * (1.0 - x)).sqrt(), 0.0, 1.0, None).unwrap();
        assert!((v - PI).abs() < 5e-8, "got {v}");
    }

    #[test]
    fn finite_interval_polynomial_is_near_exact() {
        let v = integrate_finite(|x| x * x, -1.0, 2.0, None).unwrap();
        assert!((v - 3.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn rejects_inverted_interval() {
        assert!(integrate_finite(|x| x, 2.0, 1.0, None).is_err());
    }

    #[test]
    fn nonintegrable_singularity_fails_to_converge() {
        match integrate_half_line(|x| 1.0 / x, Some(1e-13)) {
            Err(Error::IntegralNotConverged(_)) => {}
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
