//! Nevai operator, concentration measures, uniform-convergence traces,
//! Christoffel-ratio sandwich bounds, and atom diagnostics.
//!
//! The operator `G_n[f](x)` averages `f` against the probability measure
//! `ω_n^x = K_n(x,·)² / K_n(x,x) dμ`. Discretized on a Gauss rule exact to
//! degree `2n−2`, the node masses sum to one up to rounding (the mass
//! identity `∫K_n(x,y)² dμ(y) = K_n(x,x)` integrates a polynomial of
//! degree `2n−2` in `y`), which makes contractivity, positivity, and
//! normalization structural facts of the discrete average rather than
//! convergence claims. What does depend on n — and what the trace and
//! concentration diagnostics watch — is how fast `ω_n^x` collapses onto
//! the point `x`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jacobi::JacobiParameters;
use crate::kernel::{kernel_diag, kernel_row};
use crate::numerics::{ksum, linspace, poly_eval};
use crate::quadrature::{gauss_rule, stieltjes_from_discrete, DiscretizedMeasure};
use crate::scaled::Scaled;

/// Grid density used by convenience grids: points per unit interval.
pub const DEFAULT_GRID_DENSITY: usize = 41;

/// Radius around exceptional points excluded from trace grids.
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 0.1;

/// Relative agreement required between successive node-doubled rules.
const DOUBLING_REL_TOL: f64 = 1e-9;

/// Hard cap on node counts reached by the doubling policy.
const NODE_CAP: usize = 1 << 15;

/// How a test function may be integrated exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionKind {
    /// Polynomial of the given degree: a rule exact to degree `2n−2+d`
    /// integrates `K_n²·f` without error, so no refinement is needed.
    Polynomial(usize),
    /// Bounded continuous function: evaluated under the node-doubling
    /// policy until two successive refinements agree.
    GeneralContinuous,
}

/// A test function with a declared sup-norm bound, checked opportunistically
/// at every evaluation (a violation is an error, not a clamp).
pub struct TestFunction {
    name: String,
    kind: FunctionKind,
    sup_norm: f64,
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        kind: FunctionKind,
        sup_norm: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(sup_norm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "test function needs a positive sup-norm bound (got {sup_norm})"
            )));
        }
        if kind == FunctionKind::GeneralContinuous && !sup_norm.is_finite() {
            return Err(Error::InvalidInput(
                "a general-continuous test function needs a finite sup-norm bound".into(),
            ));
        }
        Ok(TestFunction { name: name.into(), kind, sup_norm, f: Box::new(f) })
    }

    /// Polynomial with coefficients in ascending order; the degree is taken
    /// from the trailing non-zero coefficient and the bound is unlimited
    /// (polynomials are integrated exactly, never bounded).
    pub fn polynomial(name: impl Into<String>, coeffs: Vec<f64>) -> Self {
        let degree = coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        TestFunction {
            name: name.into(),
            kind: FunctionKind::Polynomial(degree),
            sup_norm: f64::INFINITY,
            f: Box::new(move |x| poly_eval(&coeffs, x)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> FunctionKind {
        self.kind
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Evaluate with the opportunistic bound check. The check leaves one
    /// part in 1e12 of slack so that a bound attained exactly (e.g. 2 for
    /// (2+y²)/(1+y²) at 0) is not tripped by the last rounding of the
    /// caller's arithmetic.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = (self.f)(x);
        if !v.is_finite() || v.abs() > self.sup_norm * (1.0 + 1e-12) {
            return Err(Error::BoundExceeded { x, value: v, bound: self.sup_norm });
        }
        Ok(v)
    }

    /// Evaluate without the bound check, for density use where positivity
    /// and finiteness are validated separately by the caller.
    pub fn raw(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

/// The canonical finite battery standing in for the bounded continuous
/// test class: constant, decaying, oscillatory, odd-saturating, and
/// bounded-with-bounded-inverse behavior.
pub fn battery() -> Vec<TestFunction> {
    vec![
        TestFunction::polynomial("one", vec![1.0]),
        TestFunction::new("cauchy", FunctionKind::GeneralContinuous, 1.0, |y| 1.0 / (1.0 + y * y))
            .unwrap(),
        TestFunction::new("sine", FunctionKind::GeneralContinuous, 1.0, f64::sin).unwrap(),
        TestFunction::new("arctan", FunctionKind::GeneralContinuous, std::f64::consts::FRAC_PI_2, f64::atan)
            .unwrap(),
        TestFunction::new("ratio", FunctionKind::GeneralContinuous, 2.0, |y| {
            (2.0 + y * y) / (1.0 + y * y)
        })
        .unwrap(),
    ]
}

/// Node masses `m_i = w_i K_n(x, x_i)² / K_n(x,x)` of the concentration
/// measure on the rule's nodes. Requires the rule exact to degree
/// `2n−2+extra_degree` (`extra_degree` is the degree of a polynomial
/// integrand factor, 0 otherwise); an M-point Gauss rule is exact to
/// `2M−1`.
fn node_masses(
    params: &JacobiParameters,
    n: usize,
    x: f64,
    dm: &DiscretizedMeasure,
    extra_degree: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("kernel degree n must be at least 1".into()));
    }
    let needed = 2 * n - 2 + extra_degree;
    let available = 2 * dm.len() - 1;
    if needed > available {
        return Err(Error::InsufficientDegree { needed, available });
    }
    let diag = kernel_diag(params, n, x)?;
    let row = kernel_row(params, n, x, &dm.nodes)?;
    Ok(row
        .iter()
        .zip(&dm.log_weights)
        .map(|(&k, &lw)| k.mul(k).mul(Scaled::new(1.0, lw)).ratio(diag))
        .collect())
}

/// Evaluate the operator on exactly the given rule.
fn apply_on(
    params: &JacobiParameters,
    n: usize,
    f: &TestFunction,
    x: f64,
    dm: &DiscretizedMeasure,
) -> Result<f64> {
    let extra = match f.kind {
        FunctionKind::Polynomial(d) => d,
        FunctionKind::GeneralContinuous => 0,
    };
    let masses = node_masses(params, n, x, dm, extra)?;
    let mut terms = Vec::with_capacity(masses.len());
    for (&m, &node) in masses.iter().zip(&dm.nodes) {
        terms.push(m * f.eval(node)?);
    }
    Ok(ksum(terms))
}

fn doubling_failure(f: &TestFunction, n: usize, x: f64) -> Error {
    Error::QuadratureNotConverged {
        context: format!("Nevai operator of {} at n = {n}, x = {x}", f.name),
        cap: NODE_CAP,
    }
}

/// The Nevai operator `G_n[f](x) = (1/K_n(x,x)) Σ_i w_i K_n(x,x_i)² f(x_i)`.
///
/// Polynomial `f` is evaluated on the given rule after checking it is exact
/// to degree `2n−2+deg f`. General continuous `f` starts from
/// `max(4n, dm.len())` nodes (reusing `dm` itself when it is already that
/// fine) and doubles the node count until two successive results agree to
/// one part in 1e9 at the scale of the declared sup-norm, failing at the
/// node cap.
pub fn nevai_apply(
    params: &JacobiParameters,
    n: usize,
    f: &TestFunction,
    x: f64,
    dm: &DiscretizedMeasure,
) -> Result<f64> {
    match f.kind {
        FunctionKind::Polynomial(_) => apply_on(params, n, f, x, dm),
        FunctionKind::GeneralContinuous => {
            let mut m = dm.len().max(4 * n);
            let mut prev = if m == dm.len() {
                apply_on(params, n, f, x, dm)?
            } else {
                apply_on(params, n, f, x, &gauss_rule(params, m)?)?
            };
            while 2 * m <= NODE_CAP {
                m *= 2;
                let next = apply_on(params, n, f, x, &gauss_rule(params, m)?)?;
                if (next - prev).abs() <= DOUBLING_REL_TOL * next.abs().max(f.sup_norm) {
                    return Ok(next);
                }
                prev = next;
            }
            Err(doubling_failure(f, n, x))
        }
    }
}

/// Concentration masses sorted by distance from `x`, with plain prefix
/// sums. Plain (uncompensated) ordered summation of the non-negative
/// masses makes the mass-within-η reading exactly monotone in η — a + b ≥ a
/// for b ≥ 0 in rounded arithmetic — at a worst-case cost of a few parts
/// in 1e12 of absolute error at the node cap, far below the 1e−10 the
/// diagnostics tolerate.
struct SortedMasses {
    distances: Vec<f64>,
    prefix: Vec<f64>,
}

impl SortedMasses {
    fn build(params: &JacobiParameters, n: usize, x: f64, dm: &DiscretizedMeasure) -> Result<Self> {
        let masses = node_masses(params, n, x, dm, 0)?;
        let mut order: Vec<usize> = (0..masses.len()).collect();
        order.sort_by(|&i, &j| {
            let di = (dm.nodes[i] - x).abs();
            let dj = (dm.nodes[j] - x).abs();
            di.total_cmp(&dj).then(i.cmp(&j))
        });
        let mut distances = Vec::with_capacity(order.len());
        let mut prefix = Vec::with_capacity(order.len() + 1);
        prefix.push(0.0);
        let mut run = 0.0;
        for &i in &order {
            run += masses[i];
            distances.push((dm.nodes[i] - x).abs());
            prefix.push(run);
        }
        Ok(SortedMasses { distances, prefix })
    }

    fn mass_within(&self, eta: f64) -> f64 {
        let k = self.distances.partition_point(|&d| d <= eta);
        self.prefix[k]
    }
}

/// Mass the concentration measure `ω_n^x` places on `[x−η, x+η]`.
pub fn concentration(
    params: &JacobiParameters,
    n: usize,
    x: f64,
    eta: f64,
    dm: &DiscretizedMeasure,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("window half-width must be positive (got {eta})")));
    }
    Ok(SortedMasses::build(params, n, x, dm)?.mass_within(eta))
}

/// Concentration masses for a table of degrees and window half-widths at
/// one center `x`. Rows follow `n_list`, columns follow `etas`.
#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    pub x: f64,
    pub n_list: Vec<usize>,
    pub etas: Vec<f64>,
    pub masses: Vec<Vec<f64>>,
}

impl ConcentrationReport {
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "n,eta,mass")?;
        for (ri, &n) in self.n_list.iter().enumerate() {
            for (ci, &eta) in self.etas.iter().enumerate() {
                writeln!(out, "{n},{eta:.16e},{:.16e}", self.masses[ri][ci])?;
            }
        }
        Ok(())
    }
}

pub fn concentration_report(
    params: &JacobiParameters,
    n_list: &[usize],
    x: f64,
    etas: &[f64],
    dm: &DiscretizedMeasure,
) -> Result<ConcentrationReport> {
    validate_degree_list(n_list)?;
    if etas.is_empty() || etas.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput("window half-widths must be positive".into()));
    }
    let mut masses = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let sorted = SortedMasses::build(params, n, x, dm)?;
        masses.push(etas.iter().map(|&e| sorted.mass_within(e)).collect());
    }
    Ok(ConcentrationReport { x, n_list: n_list.to_vec(), etas: etas.to_vec(), masses })
}

/// Deviations `|G_n[f](x) − f(x)|` over a grid for a list of degrees,
/// with the per-degree supremum over the grid. Trends only — no
/// convergence verdict is attached.
#[derive(Debug, Clone)]
pub struct NevaiTrace {
    pub grid: Vec<f64>,
    pub n_list: Vec<usize>,
    /// One row per entry of `n_list`, one column per grid point.
    pub deviations: Vec<Vec<f64>>,
    /// Row-wise maximum of `deviations`.
    pub sup: Vec<f64>,
}

impl NevaiTrace {
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "n,x,deviation")?;
        for (ri, &n) in self.n_list.iter().enumerate() {
            for (ci, &x) in self.grid.iter().enumerate() {
                writeln!(out, "{n},{x:.16e},{:.16e}", self.deviations[ri][ci])?;
            }
        }
        Ok(())
    }

    pub fn write_summary_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "n,sup_deviation")?;
        for (ri, &n) in self.n_list.iter().enumerate() {
            writeln!(out, "{n},{:.16e}", self.sup[ri])?;
        }
        Ok(())
    }
}

fn validate_degree_list(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() || n_list[0] == 0 {
        return Err(Error::InvalidInput("degree list must be non-empty with entries >= 1".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("degree list must be strictly ascending".into()));
    }
    Ok(())
}

/// Operator values over a whole grid on one fixed rule (grid points fan
/// out over threads; each point's reduction is sequential, so results do
/// not depend on the thread schedule).
fn row_on(
    params: &JacobiParameters,
    n: usize,
    f: &TestFunction,
    grid: &[f64],
    dm: &DiscretizedMeasure,
) -> Result<Vec<f64>> {
    grid.par_iter().map(|&x| apply_on(params, n, f, x, dm)).collect()
}

/// Fill the deviation table for `f` over `grid` at each degree in
/// `n_list` (ascending). Polynomial `f` uses the given rule directly;
/// general `f` refines per degree under the doubling policy, with the
/// sup-norm over the grid as the agreement criterion so the whole row is
/// certified at once.
pub fn uniform_trace(
    params: &JacobiParameters,
    f: &TestFunction,
    grid: &[f64],
    n_list: &[usize],
    dm: &DiscretizedMeasure,
) -> Result<NevaiTrace> {
    validate_degree_list(n_list)?;
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("grid must be non-empty and finite".into()));
    }
    let mut deviations = Vec::with_capacity(n_list.len());
    let mut sup = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let values = match f.kind {
            FunctionKind::Polynomial(_) => row_on(params, n, f, grid, dm)?,
            FunctionKind::GeneralContinuous => {
                let mut m = dm.len().max(4 * n);
                let mut prev = if m == dm.len() {
                    row_on(params, n, f, grid, dm)?
                } else {
                    row_on(params, n, f, grid, &gauss_rule(params, m)?)?
                };
                loop {
                    if 2 * m > NODE_CAP {
                        return Err(doubling_failure(f, n, f64::NAN));
                    }
                    m *= 2;
                    let next = row_on(params, n, f, grid, &gauss_rule(params, m)?)?;
                    let scale =
                        next.iter().fold(f.sup_norm, |acc, v| acc.max(v.abs()));
                    let gap = prev
                        .iter()
                        .zip(&next)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if gap <= DOUBLING_REL_TOL * scale {
                        break next;
                    }
                    prev = next;
                }
            }
        };
        let mut row = Vec::with_capacity(grid.len());
        let mut s = 0.0f64;
        for (&v, &x) in values.iter().zip(grid) {
            let d = (v - f.eval(x)?).abs();
            row.push(d);
            s = s.max(d);
        }
        deviations.push(row);
        sup.push(s);
    }
    Ok(NevaiTrace { grid: grid.to_vec(), n_list: n_list.to_vec(), deviations, sup })
}

/// The sandwich around the Christoffel ratio for a modified measure
/// `dμ_g = g dμ`: `1/G_n[g](x) ≤ K_n(x,x;μ_g)/K_n(x,x;μ) ≤ G_n[1/g](x)`.
#[derive(Debug, Clone, Copy)]
pub struct RatioBounds {
    pub lower: f64,
    pub ratio: f64,
    pub upper: f64,
}

/// Compute the sandwich on the given rule. The ratio's numerator kernel is
/// rebuilt from scratch: the rule's weights are multiplied by `g`, the
/// recurrence coefficients of the modified measure are recovered by the
/// Stieltjes process, and the kernel diagonal is evaluated from those. The
/// recovered coefficients describe the unit-mass normalization of `μ_g`,
/// whose kernel is `∫g dμ` times the kernel of `μ_g` itself, so the ratio
/// is divided by that mass to refer to the actual modified measure.
pub fn ratio_bounds(
    params: &JacobiParameters,
    g: &TestFunction,
    n: usize,
    x: f64,
    dm: &DiscretizedMeasure,
) -> Result<RatioBounds> {
    let masses = node_masses(params, n, x, dm, 0)?;
    let mut gv = Vec::with_capacity(dm.len());
    for (i, &node) in dm.nodes.iter().enumerate() {
        let v = g.eval(node)?;
        if !(v > 0.0) {
            return Err(Error::NonPositiveDensity { index: i, x: node, value: v });
        }
        gv.push(v);
    }
    let lower = 1.0 / ksum(masses.iter().zip(&gv).map(|(&m, &v)| m * v));
    let upper = ksum(masses.iter().zip(&gv).map(|(&m, &v)| m / v));
    let mass_g = dm.integrate(|y| g.raw(y));
    let modified = dm.modify(|y| g.raw(y))?;
    let (ag, bg) = stieltjes_from_discrete(&modified, (n - 1).max(1))?;
    let params_g = JacobiParameters::from_table(ag, bg)?;
    let diag_g = kernel_diag(&params_g, n, x)?;
    let diag = kernel_diag(params, n, x)?;
    let ratio = diag_g.ratio(diag) / mass_g;
    Ok(RatioBounds { lower, ratio, upper })
}

/// For a genuinely discrete measure (the rule *is* the measure) and an
/// atom `x*` of it, the sequence `K_n(x*,x*)·μ({x*})` approaches 1 from
/// below as n grows, reaching it exactly when the polynomials exhaust the
/// M-dimensional space at n = M. The measure need not be normalized: the
/// recurrence coefficients ignore scale, and the kernel they generate
/// belongs to the unit-mass version, so the atom's *fractional* mass is
/// the right multiplier.
pub fn atom_limit_check(
    dm: &DiscretizedMeasure,
    x_star: f64,
    n_list: &[usize],
) -> Result<Vec<f64>> {
    let m = dm.len();
    let idx = dm
        .nodes
        .iter()
        .position(|&v| (v - x_star).abs() <= 1e-12 * (1.0 + x_star.abs()))
        .ok_or_else(|| {
            Error::InvalidInput(format!("x* = {x_star} is not a node of the measure"))
        })?;
    for &n in n_list {
        if n < 1 || n > m {
            return Err(Error::InvalidInput(format!(
                "kernel degree {n} outside 1..={m}: an {m}-point measure carries polynomials only up to degree {}",
                m - 1
            )));
        }
    }
    let w_frac = dm.weights[idx] / dm.total_mass();
    if m == 1 {
        return Ok(vec![1.0; n_list.len()]);
    }
    let (a, b) = stieltjes_from_discrete(dm, m - 1)?;
    let table = JacobiParameters::from_table(a, b)?;
    n_list
        .iter()
        .map(|&n| Ok(kernel_diag(&table, n, x_star)?.scale_by(w_frac).value()))
        .collect()
}

/// Uniform grid over `[lo, hi]` at a density of `points_per_unit` points
/// per unit interval (spacing `1/(points_per_unit − 1)`), always including
/// both endpoints.
pub fn uniform_grid(lo: f64, hi: f64, points_per_unit: usize) -> Vec<f64> {
    assert!(hi > lo && points_per_unit >= 2);
    let count = (((hi - lo) * (points_per_unit - 1) as f64).ceil() as usize + 1).max(2);
    linspace(lo, hi, count)
}

/// Drop grid points within `radius` of any exceptional point (points where
/// the theory predicts failure or is silent, e.g. boundary points of the
/// negative set of the modulation discriminant).
pub fn exclude_exceptional(grid: &[f64], exceptional: &[f64], radius: f64) -> Vec<f64> {
    grid.iter()
        .copied()
        .filter(|&x| exceptional.iter().all(|&e| (x - e).abs() >= radius))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobi::FamilySpec;

    fn freud2() -> JacobiParameters {
        FamilySpec::Freud { gamma: 2.0 }.build(0).unwrap()
    }

    #[test]
    fn operator_preserves_constants() {
        let params = freud2();
        let one = TestFunction::polynomial("one", vec![1.0]);
        let dm = gauss_rule(&params, 64).unwrap();
        for n in [1usize, 2, 8, 32] {
            for x in [0.0, 0.7, -1.9] {
                let v = nevai_apply(&params, n, &one, x, &dm).unwrap();
                assert!((v - 1.0).abs() < 1e-12, "G_{n}[1]({x}) = {v}");
            }
        }
    }

    #[test]
    fn degree_one_operator_averages_the_measure() {
        // K_1 = 1, so G_1[f](x) = ∫ f dμ independently of x. The doubling
        // policy refines past the handed-in rule, so compare against a far
        // finer reference at the doubling tolerance.
        let params = freud2();
        let dm = gauss_rule(&params, 64).unwrap();
        let f = TestFunction::new("cauchy", FunctionKind::GeneralContinuous, 1.0, |y| {
            1.0 / (1.0 + y * y)
        })
        .unwrap();
        let reference = gauss_rule(&params, 4096).unwrap().integrate(|y| 1.0 / (1.0 + y * y));
        let at_zero = nevai_apply(&params, 1, &f, 0.0, &dm).unwrap();
        let off_zero = nevai_apply(&params, 1, &f, 1.3, &dm).unwrap();
        assert!((at_zero - reference).abs() < 2e-9, "{at_zero} vs {reference}");
        // The degree-1 masses are the weights themselves, so the value
        // cannot depend on the evaluation point.
        assert_eq!(at_zero, off_zero);
    }

    #[test]
    fn moment_oracle_pins_the_quadratic_case() {
        // For the unit-mass Gaussian weight, K_2(0,y) = 1 + p_1(0)p_1(y) = 1
        // (p_1 is odd), so G_2[y²](0) = ∫ y² dμ = a_0² = 1/2.
        let params = freud2();
        let dm = gauss_rule(&params, 16).unwrap();
        let f = TestFunction::polynomial("square", vec![0.0, 0.0, 1.0]);
        let v = nevai_apply(&params, 2, &f, 0.0, &dm).unwrap();
        assert!((v - 0.5).abs() < 1e-13, "G_2[y²](0) = {v}");
    }

    #[test]
    fn battery_respects_contractivity_and_positivity() {
        let params = freud2();
        let dm = gauss_rule(&params, 256).unwrap();
        for f in battery() {
            for n in [2usize, 8, 32] {
                for x in [0.0, 0.7, 2.0] {
                    let v = nevai_apply(&params, n, &f, x, &dm).unwrap();
                    assert!(
                        v.abs() <= f.sup_norm() + 1e-10,
                        "{}: |G_{n}[f]({x})| = {v} > {}",
                        f.name(),
                        f.sup_norm()
                    );
                    // Non-negative members must yield non-negative averages.
                    if matches!(f.name(), "one" | "cauchy" | "ratio") {
                        assert!(v >= 0.0, "{}: G_{n}[f]({x}) = {v} < 0", f.name());
                    }
                }
            }
        }
    }

    #[test]
    fn concentration_is_monotone_with_unit_total_mass() {
        let params = freud2();
        let dm = gauss_rule(&params, 128).unwrap();
        let etas = [0.1, 0.3, 0.5, 1.0, 2.0, 5.0, 50.0];
        let report = concentration_report(&params, &[16], 0.0, &etas, &dm).unwrap();
        let row = &report.masses[0];
        for pair in row.windows(2) {
            assert!(pair[1] >= pair[0], "mass decreased with wider window: {pair:?}");
        }
        for &mass in row {
            assert!((0.0..=1.0 + 1e-10).contains(&mass), "mass {mass} outside [0,1]");
        }
        // The widest window covers every node of the rule.
        assert!((row[row.len() - 1] - 1.0).abs() < 1e-10);
        // Single-eta calls read the same table.
        let single = concentration(&params, 16, 0.0, 0.5, &dm).unwrap();
        assert_eq!(single, row[2]);
    }

    #[test]
    fn concentration_tightens_with_degree() {
        let params = freud2();
        let dm = gauss_rule(&params, 512).unwrap();
        let masses: Vec<f64> = [4usize, 16, 64]
            .iter()
            .map(|&n| concentration(&params, n, 0.0, 0.5, &dm).unwrap())
            .collect();
        assert!(masses[0] < masses[1] && masses[1] < masses[2], "{masses:?}");
        assert!(masses[2] > 0.9, "deep concentration too weak: {}", masses[2]);
    }

    #[test]
    fn degree_one_concentration_reads_the_measure_window() {
        let params = freud2();
        let dm = gauss_rule(&params, 64).unwrap();
        let eta = 0.8;
        let direct: f64 = dm
            .nodes
            .iter()
            .zip(&dm.weights)
            .filter(|(&x, _)| x.abs() <= eta)
            .map(|(_, &w)| w)
            .sum();
        let mass = concentration(&params, 1, 0.0, eta, &dm).unwrap();
        assert!((mass - direct).abs() < 1e-13);
    }

    #[test]
    fn trace_supremum_decays_for_smooth_data() {
        let params = freud2();
        let f = TestFunction::new("cauchy", FunctionKind::GeneralContinuous, 1.0, |y| {
            1.0 / (1.0 + y * y)
        })
        .unwrap();
        let grid = linspace(-1.0, 1.0, 11);
        let dm = gauss_rule(&params, 64).unwrap();
        let trace = uniform_trace(&params, &f, &grid, &[8, 32, 128], &dm).unwrap();
        assert_eq!(trace.deviations.len(), 3);
        assert_eq!(trace.deviations[0].len(), 11);
        assert!(
            trace.sup[0] > trace.sup[1] && trace.sup[1] > trace.sup[2],
            "sup deviations not decreasing: {:?}",
            trace.sup
        );
        for (row, &s) in trace.deviations.iter().zip(&trace.sup) {
            let m = row.iter().copied().fold(0.0, f64::max);
            assert_eq!(m, s, "sup column disagrees with its row");
        }
    }

    #[test]
    fn trace_export_layout() {
        let params = freud2();
        let one = TestFunction::polynomial("one", vec![1.0]);
        let dm = gauss_rule(&params, 16).unwrap();
        let grid = [0.0, 0.5];
        let trace = uniform_trace(&params, &one, &grid, &[2, 4], &dm).unwrap();
        let mut full = Vec::new();
        trace.write_csv(&mut full).unwrap();
        let text = String::from_utf8(full).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,x,deviation");
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[1].starts_with("2,0.0000000000000000e0,"));
        let mut summary = Vec::new();
        trace.write_summary_csv(&mut summary).unwrap();
        let stext = String::from_utf8(summary).unwrap();
        let slines: Vec<&str> = stext.lines().collect();
        assert_eq!(slines[0], "n,sup_deviation");
        assert_eq!(slines.len(), 1 + 2);
    }

    #[test]
    fn ratio_bounds_for_unit_density_collapse_to_one() {
        let params = freud2();
        let dm = gauss_rule(&params, 64).unwrap();
        let g = TestFunction::new("unit", FunctionKind::GeneralContinuous, 1.0, |_| 1.0).unwrap();
        let rb = ratio_bounds(&params, &g, 8, 0.3, &dm).unwrap();
        assert!((rb.lower - 1.0).abs() < 1e-9, "lower {}", rb.lower);
        assert!((rb.ratio - 1.0).abs() < 1e-9, "ratio {}", rb.ratio);
        assert!((rb.upper - 1.0).abs() < 1e-9, "upper {}", rb.upper);
    }

    #[test]
    fn sandwich_holds_for_rational_density() {
        let params = freud2();
        let dm = gauss_rule(&params, 256).unwrap();
        let g = TestFunction::new("ratio", FunctionKind::GeneralContinuous, 2.0, |y| {
            (2.0 + y * y) / (1.0 + y * y)
        })
        .unwrap();
        let rb = ratio_bounds(&params, &g, 16, 1.0, &dm).unwrap();
        assert!(rb.lower <= rb.ratio + 1e-8, "{rb:?}");
        assert!(rb.ratio <= rb.upper + 1e-8, "{rb:?}");
        // Hard bounds from the density's range on the nodes.
        let sup_g = dm.nodes.iter().map(|&y| g.raw(y)).fold(0.0, f64::max);
        let sup_inv = dm.nodes.iter().map(|&y| 1.0 / g.raw(y)).fold(0.0, f64::max);
        assert!(rb.ratio >= 1.0 / sup_g - 1e-8, "{rb:?} vs 1/sup g = {}", 1.0 / sup_g);
        assert!(rb.ratio <= sup_inv + 1e-8, "{rb:?} vs sup 1/g = {sup_inv}");
    }

    #[test]
    fn two_atom_measure_saturates_at_degree_two() {
        // Nodes ±1 with weights 1/2: p_0 = 1, p_1(x) = x, so
        // K_1(1,1)·w = 1/2 and K_2(1,1)·w = (1+1)/2 = 1 exactly.
        let dm = DiscretizedMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let seq = atom_limit_check(&dm, 1.0, &[1, 2]).unwrap();
        assert!((seq[0] - 0.5).abs() < 1e-14, "{seq:?}");
        assert!((seq[1] - 1.0).abs() < 1e-12, "{seq:?}");
    }

    #[test]
    fn atom_diagnostic_reaches_one_on_random_atoms() {
        // Deterministic scattered 8-atom measure, not normalized.
        let mut state = 0x2545f4914f6cdd1du64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64)
        };
        let nodes: Vec<f64> = (0..8).map(|i| i as f64 + rnd()).collect();
        let weights: Vec<f64> = (0..8).map(|_| 0.2 + rnd()).collect();
        let dm = DiscretizedMeasure::new(nodes.clone(), weights).unwrap();
        let n_list: Vec<usize> = (1..=8).collect();
        let seq = atom_limit_check(&dm, nodes[3], &n_list).unwrap();
        for pair in seq.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12, "not monotone: {seq:?}");
        }
        for &v in &seq {
            assert!(v <= 1.0 + 1e-10, "exceeded 1: {seq:?}");
        }
        assert!((seq[7] - 1.0).abs() < 1e-10, "did not saturate: {seq:?}");
    }

    #[test]
    fn bound_violation_is_reported() {
        let params = freud2();
        let dm = gauss_rule(&params, 32).unwrap();
        let lying = TestFunction::new("lying", FunctionKind::GeneralContinuous, 0.5, f64::cos)
            .unwrap();
        match nevai_apply(&params, 4, &lying, 0.0, &dm) {
            Err(Error::BoundExceeded { bound, .. }) => assert_eq!(bound, 0.5),
            other => panic!("expected BoundExceeded, got {other:?}"),
        }
    }

    #[test]
    fn coarse_rules_are_rejected_for_polynomials() {
        let params = freud2();
        let dm = gauss_rule(&params, 4).unwrap();
        let f = TestFunction::polynomial("square", vec![0.0, 0.0, 1.0]);
        match nevai_apply(&params, 8, &f, 0.0, &dm) {
            Err(Error::InsufficientDegree { needed: 16, available: 7 }) => {}
            other => panic!("expected InsufficientDegree, got {other:?}"),
        }
    }

    #[test]
    fn grids_exclude_exceptional_points() {
        let grid = uniform_grid(-1.0, 1.0, DEFAULT_GRID_DENSITY);
        assert_eq!(grid.len(), 81);
        assert_eq!(grid[0], -1.0);
        assert_eq!(grid[grid.len() - 1], 1.0);
        let cleaned = exclude_exceptional(&grid, &[0.0], DEFAULT_EXCLUSION_RADIUS);
        assert!(cleaned.iter().all(|&x| x.abs() >= DEFAULT_EXCLUSION_RADIUS));
        assert!(cleaned.len() < grid.len());
        assert!(cleaned.len() >= grid.len() - 9);
    }

    #[test]
    fn general_functions_require_finite_bounds() {
        assert!(TestFunction::new("bad", FunctionKind::GeneralContinuous, f64::INFINITY, |x| x)
            .is_err());
        assert!(TestFunction::new("bad", FunctionKind::GeneralContinuous, -1.0, |x| x).is_err());
    }
}
