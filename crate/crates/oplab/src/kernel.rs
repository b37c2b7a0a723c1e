//! Christoffel–Darboux kernels, the Christoffel function, and the
//! reproducing/mass identities.
//!
//! `K_n(x, y) = sum_{j<n} p_j(x) p_j(y)` is evaluated by one of two routes:
//! the direct sum (unconditionally stable, O(n)) or the Christoffel–Darboux
//! quotient `a_{n-1} (p_n(x) p_{n-1}(y) - p_{n-1}(x) p_n(y)) / (x - y)`
//! (O(1) after the recurrences, but cancellation-prone as `y -> x`). The
//! switch is purely metric: well-separated arguments take the quotient,
//! nearby ones the sum, and the diagonal always uses the sum of squares.
//! All values are carried log-scaled, since kernel values leave `f64` range
//! at large degree outside the spectral bulk.

use crate::error::{Error, Result};
use crate::jacobi::{eval_pair, scan_polynomials, JacobiParameters};
use crate::numerics::poly_eval;
use crate::quadrature::DiscretizedMeasure;
use crate::scaled::{Scaled, ScaledSum};

/// Which evaluation route produced a kernel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMethod {
    CdFormula,
    DirectSum,
}

/// A kernel evaluation together with the route that produced it.
#[derive(Debug, Clone, Copy)]
pub struct KernelValue {
    pub scaled: Scaled,
    pub method: KernelMethod,
}

impl KernelValue {
    /// Plain value; may overflow/underflow f64 at extreme degree.
    pub fn value(&self) -> f64 {
        self.scaled.value()
    }
}

/// Separation threshold switching between the quotient and the direct sum.
pub fn cd_threshold(x: f64, y: f64) -> f64 {
    1e-3 * (1.0 + x.abs() + y.abs())
}

/// `K_n(x, x)` as a scaled value (always the direct sum of squares).
pub fn kernel_diag(params: &JacobiParameters, n: usize, x: f64) -> Result<Scaled> {
    assert!(n >= 1, "kernel degree must be at least 1");
    let mut acc = ScaledSum::new();
    scan_polynomials(params, x, n, |_, p| {
        acc.add(p.mul(p));
    })?;
    Ok(acc.scaled())
}

fn kernel_direct(params: &JacobiParameters, n: usize, x: f64, y: f64) -> Result<Scaled> {
    let mut px = Vec::with_capacity(n);
    scan_polynomials(params, x, n, |_, p| px.push(p))?;
    let mut acc = ScaledSum::new();
    scan_polynomials(params, y, n, |j, p| {
        acc.add(px[j].mul(p));
    })?;
    Ok(acc.scaled())
}

fn kernel_cd(params: &JacobiParameters, n: usize, x: f64, y: f64) -> Result<Scaled> {
    let a = params.a(n - 1)?;
    let pairx = eval_pair(params, n, x)?;
    let pairy = eval_pair(params, n, y)?;
    // v = p_n, u = p_{n-1}; mantissas stay within the rescale window, so
    // the cross products are representable.
    let cross = pairx.v * pairy.u - pairx.u * pairy.v;
    let s = Scaled::new(cross, pairx.log_scale + pairy.log_scale);
    Ok(s.scale_by(a / (x - y)).normalized())
}

/// `K_n(x, y)` with the route chosen by the separation of the arguments.
pub fn kernel(params: &JacobiParameters, n: usize, x: f64, y: f64) -> Result<KernelValue> {
    assert!(n >= 1, "kernel degree must be at least 1");
    if (x - y).abs() >= cd_threshold(x, y) {
        Ok(KernelValue { scaled: kernel_cd(params, n, x, y)?, method: KernelMethod::CdFormula })
    } else if x == y {
        Ok(KernelValue { scaled: kernel_diag(params, n, x)?, method: KernelMethod::DirectSum })
    } else {
        Ok(KernelValue { scaled: kernel_direct(params, n, x, y)?, method: KernelMethod::DirectSum })
    }
}

/// `K_n(x, y_i)` for every `y_i`, sharing the `x`-side recurrence work.
/// Far nodes use the quotient (O(1) each), near nodes the direct sum.
pub fn kernel_row(params: &JacobiParameters, n: usize, x: f64, ys: &[f64]) -> Result<Vec<Scaled>> {
    assert!(n >= 1, "kernel degree must be at least 1");
    let a = params.a(n - 1)?;
    let pairx = eval_pair(params, n, x)?;
    let mut px: Option<Vec<Scaled>> = None;
    let mut out = Vec::with_capacity(ys.len());
    for &y in ys {
        if (x - y).abs() >= cd_threshold(x, y) {
            let pairy = eval_pair(params, n, y)?;
            let cross = pairx.v * pairy.u - pairx.u * pairy.v;
            let s = Scaled::new(cross, pairx.log_scale + pairy.log_scale);
            out.push(s.scale_by(a / (x - y)).normalized());
        } else if x == y {
            out.push(kernel_diag(params, n, x)?);
        } else {
            if px.is_none() {
                let mut vals = Vec::with_capacity(n);
                scan_polynomials(params, x, n, |_, p| vals.push(p))?;
                px = Some(vals);
            }
            let vals = px.as_ref().unwrap();
            let mut acc = ScaledSum::new();
            scan_polynomials(params, y, n, |j, p| {
                acc.add(vals[j].mul(p));
            })?;
            out.push(acc.scaled());
        }
    }
    Ok(out)
}

/// Christoffel function `lambda_n(x) = 1 / K_n(x, x)`; strictly positive,
/// non-increasing in `n`. Underflows to 0 honestly at extreme degree far
/// outside the spectral bulk.
pub fn christoffel(params: &JacobiParameters, n: usize, x: f64) -> Result<f64> {
    let diag = kernel_diag(params, n, x)?;
    Ok(Scaled::from_value(1.0).ratio(diag))
}

/// Residuals of the reproducing identity `∫ K_n(x, y) p(y) dμ(y) = p(x)`
/// (for `deg p < n`) and the mass identity
/// `∫ K_n(x, y)² dμ(y) = K_n(x, x)`, evaluated on a Gauss rule `dm`.
/// `p_coeffs` are standard-basis coefficients, constant term first.
/// Returns the pair of absolute residuals.
pub fn identity_residuals(
    params: &JacobiParameters,
    n: usize,
    x: f64,
    p_coeffs: &[f64],
    dm: &DiscretizedMeasure,
) -> Result<(f64, f64)> {
    assert!(n >= 1, "kernel degree must be at least 1");
    if p_coeffs.is_empty() || p_coeffs.len() > n {
        return Err(Error::InvalidInput(format!(
            "polynomial must have degree < {n} (got {} coefficients)",
            p_coeffs.len()
        )));
    }
    let degree_p = p_coeffs.len() - 1;
    let available = 2 * dm.len() - 1;
    let needed = 2 * n - 2 + degree_p;
    if needed > available {
        return Err(Error::InsufficientDegree { needed, available });
    }

    let row = kernel_row(params, n, x, &dm.nodes)?;
    let mut reproducing = ScaledSum::new();
    let mut mass = ScaledSum::new();
    for (i, k) in row.iter().enumerate() {
        let w = Scaled::new(1.0, dm.log_weights[i]);
        reproducing.add(k.mul(w).scale_by(poly_eval(p_coeffs, dm.nodes[i])));
        mass.add(k.mul(*k).mul(w));
    }
    let rep_residual = (reproducing.value() - poly_eval(p_coeffs, x)).abs();
    let diag = kernel_diag(params, n, x)?;
    mass.add(diag.scale_by(-1.0));
    Ok((rep_residual, mass.scaled().value().abs()))
}
