//! Gauss quadrature, discretized measures, and coefficient recovery.
//!
//! The `m`-point Gauss rule of a measure is read off the `m x m` Jacobi
//! matrix: nodes are its eigenvalues and the weight at a node is the
//! reciprocal of the kernel diagonal `K_m(x_i, x_i)`, evaluated in log
//! scale so rules stay usable far into regions where the weights underflow
//! `f64`. The reverse direction — recovering recurrence coefficients from a
//! discrete measure — is provided both as a discretized Stieltjes process
//! with full reorthogonalization and as a modified-moment algorithm that
//! reaches depths the Stieltjes process cannot.

use crate::error::{Error, Result};
use crate::jacobi::{FamilySpec, GradedEnd, JacobiParameters, WeightPiece};
use crate::numerics::ksum;
use crate::scaled::ScaledSum;
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex, OnceLock};

// ---------------------------------------------------------------------------
// Symmetric tridiagonal eigensolver (implicit-shift QL)
// ---------------------------------------------------------------------------

const MAX_QL_SWEEPS: usize = 50;

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix with
/// diagonal `d` (length n) and subdiagonal `e` (length n, last entry
/// scratch). Every Givens rotation applied to the matrix is reported to
/// `rotate(i, c, s)`, acting on coordinate columns `i` and `i + 1`.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut rotate: impl FnMut(usize, f64, f64)) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_SWEEPS {
                return Err(Error::EigenNoConvergence { index: l, sweeps: MAX_QL_SWEEPS });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                rotate(i, c, s);
                if i == l {
                    d[l] -= p;
                    e[l] = g;
                    e[m] = 0.0;
                }
            }
        }
    }
    Ok(())
}

fn sort_permutation(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_unstable_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    idx
}

/// Eigenvalues of the symmetric tridiagonal matrix, in ascending order.
pub fn eigenvalues_tridiag(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    assert!(off.len() + 1 == diag.len() || diag.is_empty());
    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(diag.len());
    e.extend_from_slice(off);
    e.push(0.0);
    ql_implicit(&mut d, &mut e, |_, _, _| {})?;
    let perm = sort_permutation(&d);
    Ok(perm.into_iter().map(|i| d[i]).collect())
}

/// Eigenvalues (ascending) together with the first component of each
/// normalized eigenvector.
pub fn eigen_tridiag(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    assert!(off.len() + 1 == diag.len() || diag.is_empty());
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(off);
    e.push(0.0);
    let mut row0 = vec![0.0; n];
    if n > 0 {
        row0[0] = 1.0;
    }
    ql_implicit(&mut d, &mut e, |i, c, s| {
        let (vi, vj) = (row0[i], row0[i + 1]);
        row0[i] = c * vi - s * vj;
        row0[i + 1] = s * vi + c * vj;
    })?;
    let perm = sort_permutation(&d);
    let values = perm.iter().map(|&i| d[i]).collect();
    let firsts = perm.iter().map(|&i| row0[i]).collect();
    Ok((values, firsts))
}

/// Eigenvalues (ascending) with full normalized eigenvectors;
/// `vectors[k]` is the eigenvector for `values[k]`. Quadratic memory —
/// intended for moderate sizes and for residual checks.
pub fn eigen_tridiag_full(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    assert!(off.len() + 1 == diag.len() || diag.is_empty());
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(off);
    e.push(0.0);
    // Columns of the accumulated orthogonal matrix.
    let mut z: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut col = vec![0.0; n];
            col[j] = 1.0;
            col
        })
        .collect();
    ql_implicit(&mut d, &mut e, |i, c, s| {
        let (left, right) = z.split_at_mut(i + 1);
        let a = &mut left[i];
        let b = &mut right[0];
        for k in 0..a.len() {
            let (vi, vj) = (a[k], b[k]);
            a[k] = c * vi - s * vj;
            b[k] = s * vi + c * vj;
        }
    })?;
    let perm = sort_permutation(&d);
    let values: Vec<f64> = perm.iter().map(|&i| d[i]).collect();
    let vectors: Vec<Vec<f64>> = perm.iter().map(|&i| z[i].clone()).collect();
    Ok((values, vectors))
}

/// Leading `m x m` Jacobi matrix of the parameter sequence:
/// diagonal `b_0..b_{m-1}`, subdiagonal `a_0..a_{m-2}`.
pub fn jacobi_matrix(params: &JacobiParameters, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert!(m >= 1);
    params.require_up_to(m.saturating_sub(1))?;
    let mut diag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m - 1);
    for n in 0..m {
        let (a, b) = params.coeff(n)?;
        diag.push(b);
        if n + 1 < m {
            off.push(a);
        }
    }
    Ok((diag, off))
}

// ---------------------------------------------------------------------------
// Discretized measures
// ---------------------------------------------------------------------------

/// A finite nonnegative measure given by nodes and weights, with weights
/// carried in log scale alongside their direct values so that rules remain
/// meaningful when individual weights underflow `f64`.
#[derive(Debug, Clone)]
pub struct DiscretizedMeasure {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl DiscretizedMeasure {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::InvalidInput("measure needs equal non-empty node/weight lists".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveDensity { index: i, x: nodes[i], value: w });
            }
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(DiscretizedMeasure { nodes, weights, log_weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        ksum(self.weights.iter().copied())
    }

    /// `sum w_i f(x_i)` with compensated accumulation.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        ksum(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)))
    }

    /// Multiply the weights by a positive density `g` and renormalize to
    /// unit total mass, failing on any node where `g` is non-positive or
    /// non-finite. The discarded normalization (the pre-division mass
    /// `∫ g dμ`) is recoverable as `self.integrate(g)`.
    pub fn modify(&self, mut g: impl FnMut(f64) -> f64) -> Result<DiscretizedMeasure> {
        let mut weights = Vec::with_capacity(self.len());
        let mut log_weights = Vec::with_capacity(self.len());
        for (i, &x) in self.nodes.iter().enumerate() {
            let gv = g(x);
            if !(gv > 0.0) || !gv.is_finite() {
                return Err(Error::NonPositiveDensity { index: i, x, value: gv });
            }
            weights.push(self.weights[i] * gv);
            log_weights.push(self.log_weights[i] + gv.ln());
        }
        let mass = ksum(weights.iter().copied());
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidInput(format!("modified measure has unusable mass {mass}")));
        }
        let log_mass = mass.ln();
        for w in &mut weights {
            *w /= mass;
        }
        for lw in &mut log_weights {
            *lw -= log_mass;
        }
        Ok(DiscretizedMeasure { nodes: self.nodes.clone(), weights, log_weights })
    }

    /// Write `x,w` rows with 17 significant digits (a lossless decimal
    /// round-trip for f64). Rules whose weights have underflowed to zero
    /// cannot be exported faithfully in linear scale and are rejected on
    /// re-import.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "x,w")?;
        for i in 0..self.len() {
            writeln!(out, "{:.16e},{:.16e}", self.nodes[i], self.weights[i])?;
        }
        Ok(())
    }

    /// Parse the format produced by [`write_csv`]; log-weights are
    /// recomputed from the linear weights, which must all be positive.
    pub fn read_csv(input: &mut impl BufRead) -> Result<DiscretizedMeasure> {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if lineno == 0 && t.starts_with('x') {
                continue;
            }
            let fields: Vec<&str> = t.split(',').collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    reason: format!("expected 2 comma-separated fields, got {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    reason: format!("bad numeric field {s:?}"),
                })
            };
            nodes.push(parse(fields[0])?);
            weights.push(parse(fields[1])?);
        }
        if nodes.is_empty() {
            return Err(Error::InvalidInput("measure file has no data rows".into()));
        }
        DiscretizedMeasure::new(nodes, weights)
    }
}

// ---------------------------------------------------------------------------
// Gauss rules
// ---------------------------------------------------------------------------

/// The `m`-point Gauss rule of the parameter sequence's measure
/// (normalized to unit mass). Nodes ascend; the rule is exact for
/// polynomials of degree `2m - 1`.
///
/// Weights come from the squared first eigenvector components, which stay
/// backward-stable even when nodes crowd exponentially close to atoms of a
/// discrete measure (where the Christoffel-function identity
/// `w_i = 1/K_m(x_i, x_i)` is wrecked by any node error, because the
/// kernel diagonal varies on the node-to-atom distance scale). Where a
/// weight underflows f64 entirely — possible only deep in the tail of a
/// continuous weight, never at an atom, which carries fixed positive
/// mass — the Christoffel identity supplies a finite `log_weight`.
pub fn gauss_rule(params: &JacobiParameters, m: usize) -> Result<DiscretizedMeasure> {
    assert!(m >= 1);
    let (diag, off) = jacobi_matrix(params, m)?;
    let (nodes, firsts) = eigen_tridiag(&diag, &off)?;
    let mut weights = Vec::with_capacity(m);
    let mut log_weights = Vec::with_capacity(m);
    for (i, &x) in nodes.iter().enumerate() {
        let w = firsts[i] * firsts[i];
        weights.push(w);
        if w >= 1e-300 {
            log_weights.push(w.ln());
        } else {
            let mut acc = ScaledSum::new();
            crate::jacobi::scan_polynomials(params, x, m, |_, p| {
                acc.add(p.mul(p));
            })?;
            log_weights.push(-acc.scaled().log_abs());
        }
    }
    Ok(DiscretizedMeasure { nodes, weights, log_weights })
}

/// Smallest Gauss rule integrating polynomials up to `degree` exactly.
pub fn rule_for_degree(params: &JacobiParameters, degree: usize) -> Result<DiscretizedMeasure> {
    gauss_rule(params, degree / 2 + 1)
}

// ---------------------------------------------------------------------------
// Gauss-Legendre panels and weight discretization
// ---------------------------------------------------------------------------

/// `m`-point Gauss-Legendre rule on `[-1, 1]` for the Lebesgue measure
/// (weights sum to 2). Rules are cached per size.
pub fn legendre_rule(m: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&m) {
        return hit.clone();
    }
    // Orthonormal Legendre coefficients: b_n = 0, a_n = (n+1)/sqrt((2n+1)(2n+3)).
    let a: Vec<f64> = (0..m)
        .map(|n| {
            let nf = n as f64;
            (nf + 1.0) / ((2.0 * nf + 1.0) * (2.0 * nf + 3.0)).sqrt()
        })
        .collect();
    let b = vec![0.0; m];
    let params = JacobiParameters::from_table(a, b).expect("legendre coefficients are valid");
    let dm = gauss_rule(&params, m).expect("legendre rule always converges");
    let weights: Vec<f64> = dm.weights.iter().map(|w| 2.0 * w).collect();
    let entry = Arc::new((dm.nodes, weights));
    cache.lock().unwrap().insert(m, entry.clone());
    entry
}

fn push_panel(
    w: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    m: usize,
    nodes: &mut Vec<f64>,
    weights: &mut Vec<f64>,
) {
    let rule = legendre_rule(m);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    for (&t, &omega) in rule.0.iter().zip(&rule.1) {
        let x = mid + half * t;
        let wt = omega * half * w(x);
        if wt > 0.0 && wt.is_finite() {
            nodes.push(x);
            weights.push(wt);
        }
    }
}

/// Discretize a weight function into a composite panel rule able to
/// integrate `p(x) w(x)` for polynomials up to `degree`. Graded piece ends
/// receive a geometric panel stack fine enough for the stated algebraic
/// power; `mult >= 1` scales all panel sizes for convergence checking.
pub(crate) fn discretize_weight(
    w: &dyn Fn(f64) -> f64,
    pieces: &[WeightPiece],
    degree: usize,
    mult: f64,
) -> Result<DiscretizedMeasure> {
    let d = degree as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let size = |raw: f64| -> usize { (mult * raw).ceil().max(4.0) as usize };
    for piece in pieces {
        let len = piece.hi - piece.lo;
        if !(len > 0.0) {
            return Err(Error::InvalidInput("weight piece has non-positive length".into()));
        }
        match piece.graded {
            None => {
                // A single ungraded panel is often the entire discretization;
                // oversize it so a Stieltjes pass on the result keeps its
                // two-nodes-per-coefficient safety margin.
                push_panel(w, piece.lo, piece.hi, size(1.1 * d + 30.0), &mut nodes, &mut weights);
            }
            Some((end, power)) => {
                let p0 = power.min(0.0);
                if p0 <= -1.0 {
                    return Err(Error::InvalidInput(format!(
                        "graded endpoint power must exceed -1 (got {power})"
                    )));
                }
                let levels = (62.0 / (1.0 + p0)).ceil() as usize;
                let stack = (len / 2.0).min(1.0);
                // Outer panel away from the graded end.
                let (outer_lo, outer_hi, edge) = match end {
                    GradedEnd::Lo => (piece.lo + stack, piece.hi, piece.lo),
                    GradedEnd::Hi => (piece.lo, piece.hi - stack, piece.hi),
                };
                push_panel(w, outer_lo, outer_hi, size(0.55 * d + 30.0), &mut nodes, &mut weights);
                // Geometric stack toward the edge; the innermost sliver of
                // relative length 2^-levels is dropped (its share of the
                // mass is below resolution by construction of `levels`).
                let mut frac = 1.0f64;
                for _ in 0..levels {
                    let next = frac / 2.0;
                    let (plo, phi) = match end {
                        GradedEnd::Lo => (edge + stack * next, edge + stack * frac),
                        GradedEnd::Hi => (edge - stack * frac, edge - stack * next),
                    };
                    let span = stack * next;
                    let m = size(0.8 * d * (span / len).sqrt() + 8.0);
                    push_panel(w, plo, phi, m, &mut nodes, &mut weights);
                    frac = next;
                }
            }
        }
    }
    let perm = sort_permutation(&nodes);
    let nodes: Vec<f64> = perm.iter().map(|&i| nodes[i]).collect();
    let weights: Vec<f64> = perm.iter().map(|&i| weights[i]).collect();
    DiscretizedMeasure::new(nodes, weights)
}

// ---------------------------------------------------------------------------
// Stieltjes coefficient recovery
// ---------------------------------------------------------------------------

/// Recover the first `n_count` coefficient pairs `(a_n, b_n)` of the
/// measure's orthonormal recurrence by the discretized Stieltjes process
/// (Lanczos with full two-pass reorthogonalization). Returns
/// `(a, b)` with `a.len() == b.len() == n_count`.
///
/// When `dm` stands in for a continuous measure, only the range
/// `n_count <= dm.len() / 2` carries the round-trip quality guarantee;
/// deeper requests return the *discrete* measure's own coefficients, which
/// is exactly what atom diagnostics want (an M-point measure has
/// orthonormal polynomials up to degree M-1, so `n_count < M` is a hard
/// limit — at M the space is exhausted).
pub fn stieltjes_from_discrete(dm: &DiscretizedMeasure, n_count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = dm.len();
    if n_count >= m {
        return Err(Error::InsufficientDegree { needed: n_count, available: m - 1 });
    }
    let sqw: Vec<f64> = dm.weights.iter().map(|w| w.sqrt()).collect();
    let norm0 = ksum(sqw.iter().map(|v| v * v)).sqrt();
    if !(norm0 > 0.0) {
        return Err(Error::InvalidInput("measure has zero mass".into()));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_count + 1);
    basis.push(sqw.iter().map(|v| v / norm0).collect());
    let mut a = Vec::with_capacity(n_count);
    let mut b = Vec::with_capacity(n_count);
    for k in 0..n_count {
        let vk = &basis[k];
        // u = X v_k
        let mut u: Vec<f64> = vk.iter().zip(&dm.nodes).map(|(&v, &x)| x * v).collect();
        let bk = ksum(u.iter().zip(vk).map(|(&ui, &vi)| ui * vi));
        b.push(bk);
        for (ui, &vi) in u.iter_mut().zip(vk) {
            *ui -= bk * vi;
        }
        if k > 0 {
            let ak_prev = a[k - 1];
            for (ui, &vi) in u.iter_mut().zip(&basis[k - 1]) {
                *ui -= ak_prev * vi;
            }
        }
        // Two passes of classical Gram-Schmidt against the whole basis.
        let mut worst: f64 = 0.0;
        for _pass in 0..2 {
            for vj in &basis {
                let c = ksum(u.iter().zip(vj).map(|(&ui, &vi)| ui * vi));
                if _pass == 0 && vj.as_ptr() != vk.as_ptr() {
                    // Coefficients against older vectors measure drift.
                }
                worst = worst.max(c.abs());
                for (ui, &vi) in u.iter_mut().zip(vj) {
                    *ui -= c * vi;
                }
            }
        }
        let ak = ksum(u.iter().map(|v| v * v)).sqrt();
        if !(ak > 1e-140) {
            return Err(Error::Breakdown { context: "stieltjes process".into(), step: k });
        }
        // Loss of orthogonality shows up as large reorthogonalization
        // corrections relative to the new vector's norm.
        if worst > 1e-6 * ak.max(1.0) && worst > 1e-6 {
            return Err(Error::OrthogonalityLost { step: k, residual: worst });
        }
        a.push(ak);
        for ui in u.iter_mut() {
            *ui /= ak;
        }
        basis.push(u);
    }
    Ok((a, b))
}

// ---------------------------------------------------------------------------
// Gram-Cholesky connection for multiplicatively perturbed measures
// ---------------------------------------------------------------------------

/// Orthonormal recurrence coefficients of `dnu = g dmu` together with the
/// total mass of `dnu`, for a strictly positive density `g` against a
/// unit-mass base measure `mu`.
#[derive(Debug, Clone)]
pub struct DensityConnection {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `integral g dmu`; the orthonormal polynomials of `dnu` start at
    /// `q_0 = 1/sqrt(mass)`.
    pub mass: f64,
}

/// Banded lower-triangular matrix: `band[d][j] = L_{j+d, j}`.
struct BandedLower {
    band: Vec<Vec<f64>>,
}

impl BandedLower {
    fn get(&self, i: usize, j: usize) -> f64 {
        let d = i - j;
        if d < self.band.len() {
            self.band[d][j]
        } else {
            0.0
        }
    }
}

/// Cholesky factorization of a banded symmetric positive definite matrix
/// given as `gram[d][l] = G_{l, l+d}`.
fn banded_cholesky(gram: &[Vec<f64>]) -> Result<BandedLower> {
    let half = gram.len() - 1;
    let n = gram[0].len();
    let mut band: Vec<Vec<f64>> = (0..=half).map(|d| vec![0.0; n - d.min(n)]) .collect();
    for j in 0..n {
        // L_{jj}
        let start = j.saturating_sub(half);
        let mut s = gram[0][j];
        for k in start..j {
            let l_jk = band[j - k][k];
            s -= l_jk * l_jk;
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Breakdown { context: "gram matrix cholesky".into(), step: j });
        }
        let l_jj = s.sqrt();
        band[0][j] = l_jj;
        for i in j + 1..(j + half + 1).min(n) {
            let mut s = gram[i - j][j];
            let start = i.saturating_sub(half).max(0);
            for k in start..j {
                if i - k <= half {
                    s -= band[i - k][k] * band[j - k][k];
                }
            }
            band[i - j][j] = s / l_jj;
        }
    }
    Ok(BandedLower { band })
}

/// Compute the banded Gram matrix `G_{lm} = integral p_l p_m g dmu` for
/// `l, m <= n_size - 1`, using an `m_quad`-point Gauss rule of `mu`. The
/// band is grown until two consecutive diagonals fall below the noise
/// floor (or `band_cap` is reached). Entries are accumulated per node with
/// the polynomial values carried in log scale, so tail nodes whose direct
/// weights underflow still contribute their full share.
fn gram_band(
    params: &JacobiParameters,
    g: &dyn Fn(f64) -> f64,
    n_size: usize,
    m_quad: usize,
    band_cap: usize,
) -> Result<Vec<Vec<f64>>> {
    let rule = gauss_rule(params, m_quad)?;
    let cap = band_cap.min(n_size - 1);
    let mut gram: Vec<Vec<f64>> = (0..=cap).map(|d| vec![0.0; n_size - d]).collect();
    let mut phi = vec![0.0f64; n_size];
    for (i, &x) in rule.nodes.iter().enumerate() {
        let gv = g(x);
        if !(gv > 0.0) || !gv.is_finite() {
            return Err(Error::NonPositiveDensity { index: i, x, value: gv });
        }
        let half_log_w = 0.5 * (rule.log_weights[i] + gv.ln());
        crate::jacobi::scan_polynomials(params, x, n_size, |l, p| {
            // phi_l = p_l(x) sqrt(w g): order one even where w underflows.
            phi[l] = p.mant * (p.log + half_log_w).exp();
        })?;
        for (d, diag) in gram.iter_mut().enumerate() {
            for l in 0..n_size - d {
                diag[l] += phi[l] * phi[l + d];
            }
        }
    }
    // Trim the band where it has decayed to the noise floor.
    let scale = gram[0].iter().cloned().fold(0.0f64, f64::max);
    let floor = 1e-15 * scale.max(1.0);
    let mut keep = gram.len();
    let mut quiet = 0usize;
    for (d, diag) in gram.iter().enumerate().skip(1) {
        let mx = diag.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        if mx < floor {
            quiet += 1;
            if quiet == 2 {
                keep = d + 1;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    gram.truncate(keep);
    Ok(gram)
}

/// Recurrence coefficients of the multiplicatively perturbed measure
/// `dnu = g dmu`, to depth `n_count`, through the banded Cholesky
/// factorization of the Gram matrix `G_{lm} = <p_l, p_m>_{g dmu}`:
///
/// ```text
/// a'_k = a_k L_{k+1,k+1} / L_{kk}
/// b'_k = b_k + a_k L_{k+1,k} / L_{kk} - a_{k-1} L_{k,k-1} / L_{k-1,k-1}
/// ```
///
/// This route is well conditioned whenever `g` is bounded away from zero
/// and infinity (the Gram matrix's condition number is at most
/// `sup g / inf g`), and it reaches depths where weight-space methods
/// break down, because every quantity it touches is order one. The
/// quadrature size is doubled until two ladder rungs agree.
pub fn density_connection(
    params: &JacobiParameters,
    g: &dyn Fn(f64) -> f64,
    n_count: usize,
) -> Result<DensityConnection> {
    assert!(n_count >= 1);
    let n_size = n_count + 1;
    let band_cap = 240;
    let mut m_quad = n_size + 60;
    let mut prev: Option<DensityConnection> = None;
    let cap = 1usize << 15;
    loop {
        let gram = gram_band(params, g, n_size, m_quad, band_cap)?;
        let l = banded_cholesky(&gram)?;
        let mut a = Vec::with_capacity(n_count);
        let mut b = Vec::with_capacity(n_count);
        for k in 0..n_count {
            let (ak, bk) = params.coeff(k)?;
            let mut bp = bk + ak * l.get(k + 1, k) / l.get(k, k);
            if k > 0 {
                let akm1 = params.a(k - 1)?;
                bp -= akm1 * l.get(k, k - 1) / l.get(k - 1, k - 1);
            }
            b.push(bp);
            a.push(ak * l.get(k + 1, k + 1) / l.get(k, k));
        }
        let cur = DensityConnection { a, b, mass: gram[0][0] };
        if let Some(p) = prev {
            let mut worst = 0.0f64;
            for k in 0..n_count {
                worst = worst.max((cur.a[k] - p.a[k]).abs() / (1.0 + cur.a[k].abs()));
                worst = worst.max((cur.b[k] - p.b[k]).abs() / (1.0 + cur.b[k].abs()));
            }
            if worst <= 1e-11 {
                return Ok(cur);
            }
        }
        if m_quad >= cap {
            return Err(Error::QuadratureNotConverged {
                context: "gram matrix quadrature ladder".into(),
                cap,
            });
        }
        prev = Some(cur);
        m_quad = (m_quad * 2).min(cap);
    }
}

// ---------------------------------------------------------------------------
// Weight-family resolution
// ---------------------------------------------------------------------------

/// Resolve recurrence coefficients for a weight-defined family by
/// discretization plus the Stieltjes process. The discretization error of
/// coefficient `n` grows exponentially in `n` at fixed node budget, so the
/// budget is raised geometrically until two consecutive ladder rungs agree
/// on every requested coefficient; an explicit spectral-support wall guards
/// against depths the weight cannot support in double precision. Honest
/// failure: when the ladder tops out or the wall is hit, the error reports
/// the largest safe index.
pub(crate) fn resolve_weight_table(fam: &FamilySpec, n_max: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (w, pieces) = fam
        .weight_layout(n_max)
        .ok_or_else(|| Error::InvalidInput("family has no weight layout".into()))?;
    let degree = 2 * n_max + 20;
    let n_count = n_max + 1;

    let agreement = |lhs: &(Vec<f64>, Vec<f64>), rhs: &(Vec<f64>, Vec<f64>)| -> usize {
        for n in 0..n_count {
            let da = (lhs.0[n] - rhs.0[n]).abs() / (1.0 + rhs.0[n].abs());
            let db = (lhs.1[n] - rhs.1[n]).abs() / (1.0 + rhs.1[n].abs());
            if da > 1e-11 || db > 1e-11 {
                return n;
            }
        }
        n_count
    };

    let mut mult = 1.0f64;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut best_agree = 0usize;
    for _rung in 0..7 {
        let dm = discretize_weight(w.as_ref(), &pieces, degree, mult)?;
        let rc = stieltjes_from_discrete(&dm, n_count)?;
        if let Some(p) = &prev {
            let agree = agreement(p, &rc);
            best_agree = best_agree.max(agree);
            if agree == n_count {
                // Support wall: coefficients are only trustworthy while the
                // spectral window they generate stays inside the range where
                // the discretized weight has not underflowed to zero.
                let x_live = dm.nodes.iter().map(|&x| x.abs()).fold(0.0f64, f64::max);
                for n in 0..n_count {
                    if rc.1[n].abs() + 2.0 * rc.0[n] > 0.95 * x_live {
                        return Err(Error::BeyondResolution {
                            requested: n_max,
                            max_safe: n.saturating_sub(1),
                        });
                    }
                }
                return Ok(rc);
            }
        }
        prev = Some(rc);
        mult *= 1.8;
    }
    Err(Error::BeyondResolution { requested: n_max, max_safe: best_agree.saturating_sub(1) })
}
