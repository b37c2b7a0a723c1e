//! Orthogonal polynomial ensembles on discretized measures.
//!
//! An `n`-point ensemble attached to a measure `μ` has joint density
//! proportional to the squared Vandermonde determinant times `∏ μ(λ_i)` —
//! equivalently, it is the determinantal point process whose kernel is the
//! degree-`n` Christoffel–Darboux projection. On a discretization with nodes
//! `x_i` and weights `w_i`, the feature vectors
//! `φ(x_i) = (p_0(x_i)√w_i, …, p_{n−1}(x_i)√w_i)` make the kernel an exact
//! rank-`n` projection, so the ensemble can be sampled exactly by sequential
//! conditioning and the mean and variance of linear statistics have closed
//! quadratic forms. This module provides the sampler, the exact statistic
//! formulas, and the law-of-large-numbers experiment that compares
//! `(1/ρ_n)·Ξ_n f` against its profile limit `∫ f dν`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jacobi::{scan_polynomials, JacobiParameters};
use crate::nevai::TestFunction;
use crate::numerics::{kdot, ksum};
use crate::quadrature::{gauss_rule, DiscretizedMeasure};
use crate::scaled::Scaled;
use crate::spectral::AsymptoticProfile;

/// Largest tolerated deviation of `ΦᵀΦ` from the identity.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// A residual kernel diagonal more negative than this is treated as lost
/// orthogonality rather than rounding noise.
const RESIDUAL_TOL: f64 = 1e-10;

/// Default `ε` for the reported concentration bound
/// `2·exp(−ε·ρ_n/(6‖f‖_∞))`.
pub const DEFAULT_CONCENTRATION_EPSILON: f64 = 0.1;

// ---------------------------------------------------------------------------
// Ensemble sampler
// ---------------------------------------------------------------------------

/// An `n`-point orthogonal polynomial ensemble on a discretized measure,
/// held as the `M×n` feature matrix with rows
/// `φ(x_i) = (p_0(x_i)√w_i, …, p_{n−1}(x_i)√w_i)`.
///
/// Constructing the sampler verifies `ΦᵀΦ = Id` to [`ORTHONORMALITY_TOL`]:
/// everything downstream — projection sampling, the mean/variance identities
/// — is exact precisely because the features are orthonormal columns on the
/// discretization. The normalization constant of the ensemble's raw density
/// never appears; the projection structure absorbs it.
pub struct EnsembleSampler {
    dm: DiscretizedMeasure,
    n: usize,
    /// Column-major: entry `k·M + i` holds `p_k(x_i)·√w_i`. Column-major
    /// keeps both Gram accumulation and the per-step projection updates on
    /// contiguous memory.
    cols: Vec<f64>,
}

impl std::fmt::Debug for EnsembleSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnsembleSampler")
            .field("nodes", &self.dm.len())
            .field("n", &self.n)
            .finish()
    }
}

impl EnsembleSampler {
    pub fn new(params: &JacobiParameters, dm: DiscretizedMeasure, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("ensemble size must be at least 1".into()));
        }
        let m = dm.len();
        if n > m {
            return Err(Error::InvalidInput(format!(
                "a rank-{n} projection needs at least {n} nodes (measure has {m})"
            )));
        }
        let mut cols = vec![0.0; n * m];
        for i in 0..m {
            let half_lw = 0.5 * dm.log_weights[i];
            scan_polynomials(params, dm.nodes[i], n, |k, p| {
                cols[k * m + i] = Scaled::new(p.mant, p.log + half_lw).value();
            })?;
        }
        let sampler = EnsembleSampler { dm, n, cols };
        let (defect, row) = sampler.orthonormality_defect();
        if defect > ORTHONORMALITY_TOL {
            return Err(Error::OrthogonalityLost { step: row, residual: defect });
        }
        Ok(sampler)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn measure(&self) -> &DiscretizedMeasure {
        &self.dm
    }

    fn col(&self, k: usize) -> &[f64] {
        let m = self.dm.len();
        &self.cols[k * m..(k + 1) * m]
    }

    /// Largest entry deviation of `ΦᵀΦ` from the identity, with the row it
    /// occurs in.
    pub fn orthonormality_defect(&self) -> (f64, usize) {
        (0..self.n)
            .into_par_iter()
            .map(|k| {
                let mut worst = 0.0f64;
                for l in k..self.n {
                    let g = kdot(self.col(k), self.col(l));
                    let target = if k == l { 1.0 } else { 0.0 };
                    worst = worst.max((g - target).abs());
                }
                (worst, k)
            })
            .reduce(|| (0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
    }

    /// Kernel diagonal masses `d_i = ‖φ(x_i)‖² = K_n(x_i,x_i)·w_i`; these
    /// sum to `n` (the trace of a rank-`n` projection).
    pub fn kernel_masses(&self) -> Vec<f64> {
        let m = self.dm.len();
        let mut d = vec![0.0; m];
        for k in 0..self.n {
            let col = self.col(k);
            for i in 0..m {
                d[i] += col[i] * col[i];
            }
        }
        d
    }

    /// One exact draw: sequential conditioning for a projection kernel.
    /// Each step picks a node proportionally to the residual diagonal, then
    /// projects the features onto the orthocomplement of the chosen one.
    fn draw_one(&self, seed: u64, stream: u64) -> Result<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let m = self.dm.len();
        let n = self.n;
        let mut d = self.kernel_masses();
        // Orthonormal basis (rows) of the selected features' span.
        let mut basis: Vec<f64> = Vec::with_capacity(n * n);
        let mut feature = vec![0.0; n];
        let mut proj = vec![0.0; m];
        let mut picked = Vec::with_capacity(n);
        for step in 0..n {
            let total = ksum(d.iter().copied());
            if !(total > 0.0) {
                return Err(Error::OrthogonalityLost { step, residual: total });
            }
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &di) in d.iter().enumerate() {
                acc += di;
                if acc > u {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave acc marginally below u at the end of the
            // walk; fall back to the last node with mass.
            let idx = match chosen {
                Some(i) => i,
                None => match (0..m).rev().find(|&i| d[i] > 0.0) {
                    Some(i) => i,
                    None => return Err(Error::OrthogonalityLost { step, residual: total }),
                },
            };
            picked.push(idx);
            for k in 0..n {
                feature[k] = self.cols[k * m + idx];
            }
            for t in 0..step {
                let g = &basis[t * n..(t + 1) * n];
                let c = kdot(g, &feature);
                for k in 0..n {
                    feature[k] -= c * g[k];
                }
            }
            let norm2 = kdot(&feature, &feature);
            if !(norm2 > 0.0) {
                return Err(Error::OrthogonalityLost { step, residual: norm2 });
            }
            let inv = 1.0 / norm2.sqrt();
            for v in feature.iter_mut() {
                *v *= inv;
            }
            // d_i -= (g · φ_i)², computed for all nodes as Φ·g.
            for p in proj.iter_mut() {
                *p = 0.0;
            }
            for k in 0..n {
                let gk = feature[k];
                if gk != 0.0 {
                    let col = self.col(k);
                    for i in 0..m {
                        proj[i] += gk * col[i];
                    }
                }
            }
            for i in 0..m {
                d[i] -= proj[i] * proj[i];
                if d[i] < -RESIDUAL_TOL {
                    return Err(Error::OrthogonalityLost { step, residual: d[i] });
                }
                if d[i] < 0.0 {
                    d[i] = 0.0;
                }
            }
            d[idx] = 0.0;
            basis.extend_from_slice(&feature);
        }
        picked.sort_unstable();
        Ok(picked)
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// A batch of ensemble draws; each draw is a sorted `n`-subset of node
/// indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleBatch {
    pub seed: u64,
    pub draws: Vec<Vec<usize>>,
}

impl SampleBatch {
    /// CSV rows `draw_index,node_0,…,node_{n−1}`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let n = self.draws.first().map_or(0, |d| d.len());
        write!(w, "draw_index")?;
        for k in 0..n {
            write!(w, ",node_{k}")?;
        }
        writeln!(w)?;
        for (di, draw) in self.draws.iter().enumerate() {
            write!(w, "{di}")?;
            for idx in draw {
                write!(w, ",{idx}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Draw `count` independent samples. Draw `j` depends only on
/// `(seed, j)` — the generator is re-keyed per draw with a distinct stream —
/// so batches are reproducible and draws parallelize freely.
pub fn sample(es: &EnsembleSampler, seed: u64, count: usize) -> Result<SampleBatch> {
    let draws = (0..count)
        .into_par_iter()
        .map(|j| es.draw_one(seed, j as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleBatch { seed, draws })
}

// ---------------------------------------------------------------------------
// Exact statistics
// ---------------------------------------------------------------------------

fn node_values(es: &EnsembleSampler, f: &TestFunction) -> Result<Vec<f64>> {
    es.dm.nodes.iter().map(|&x| f.eval(x)).collect()
}

/// Exact mean of the linear statistic `Ξf = Σ_{λ ∈ ensemble} f(λ)`:
/// `E[Ξf] = Σ_i f(x_i)·K_n(x_i,x_i)·w_i`, computed as `Σ_i f(x_i)‖φ_i‖²`.
pub fn mean_statistic(es: &EnsembleSampler, f: &TestFunction) -> Result<f64> {
    let fv = node_values(es, f)?;
    let d = es.kernel_masses();
    Ok(ksum(fv.iter().zip(&d).map(|(&v, &di)| v * di)))
}

/// Exact variance of the linear statistic:
/// `Var[Ξf] = Σ_i f²(x_i)‖φ_i‖² − Σ_{i,j} f(x_i)f(x_j)(φ_i·φ_j)²`.
///
/// The double sum is the squared Frobenius norm of the `n×n` Gram form
/// `B = Φᵀ·diag(f)·Φ`, which brings the cost down from `M²·n` to `M·n²`.
/// Projection kernels dominate their square, so the result is nonnegative
/// up to rounding; a value below `−1e−10` is reported as lost orthogonality.
pub fn var_statistic(es: &EnsembleSampler, f: &TestFunction) -> Result<f64> {
    let fv = node_values(es, f)?;
    let d = es.kernel_masses();
    let term1 = ksum(fv.iter().zip(&d).map(|(&v, &di)| v * v * di));
    let n = es.n;
    let m = es.dm.len();
    // Row k of B, entries l >= k; diagonal counted once, off-diagonal twice.
    let partials: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let ck = es.col(k);
            let mut weighted = vec![0.0; m];
            for i in 0..m {
                weighted[i] = fv[i] * ck[i];
            }
            let mut acc = Vec::with_capacity(n - k);
            for l in k..n {
                let b = kdot(&weighted, es.col(l));
                acc.push(if l == k { b * b } else { 2.0 * b * b });
            }
            ksum(acc)
        })
        .collect();
    let term2 = ksum(partials);
    let var = term1 - term2;
    if var < -RESIDUAL_TOL {
        return Err(Error::OrthogonalityLost { step: n, residual: var });
    }
    Ok(var)
}

/// Exact and Monte Carlo views of one linear statistic.
#[derive(Debug, Clone, Serialize)]
pub struct StatisticReport {
    pub exact_mean: f64,
    pub exact_variance: f64,
    pub mc_mean: f64,
    pub mc_variance: f64,
    /// `√(mc_variance / draws)`.
    pub standard_error: f64,
    pub draws: usize,
}

impl StatisticReport {
    /// Stable-order JSON rendering (field order as declared).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("statistic report serializes")
    }
}

/// Exact mean/variance alongside a seeded Monte Carlo estimate over
/// `draws` samples (unbiased sample variance, so at least two draws).
pub fn statistic_report(
    es: &EnsembleSampler,
    f: &TestFunction,
    seed: u64,
    draws: usize,
) -> Result<StatisticReport> {
    if draws < 2 {
        return Err(Error::InvalidInput(format!(
            "the sample variance needs at least two draws (got {draws})"
        )));
    }
    let exact_mean = mean_statistic(es, f)?;
    let exact_variance = var_statistic(es, f)?;
    let fv = node_values(es, f)?;
    let batch = sample(es, seed, draws)?;
    let values: Vec<f64> = batch
        .draws
        .iter()
        .map(|s| ksum(s.iter().map(|&i| fv[i])))
        .collect();
    let mc_mean = ksum(values.iter().copied()) / draws as f64;
    let mc_variance =
        ksum(values.iter().map(|v| (v - mc_mean) * (v - mc_mean))) / (draws - 1) as f64;
    Ok(StatisticReport {
        exact_mean,
        exact_variance,
        mc_mean,
        mc_variance,
        standard_error: (mc_variance / draws as f64).sqrt(),
        draws,
    })
}

// ---------------------------------------------------------------------------
// Law-of-large-numbers experiments
// ---------------------------------------------------------------------------

/// How densely each ensemble size is discretized: `M = nodes_per_degree·n`.
/// The kernel needs room to act as a projection, so at least 4.
#[derive(Debug, Clone, Copy)]
pub struct DiscretizationPolicy {
    pub nodes_per_degree: usize,
}

impl Default for DiscretizationPolicy {
    fn default() -> Self {
        DiscretizationPolicy { nodes_per_degree: 4 }
    }
}

/// One ensemble size in an LLN experiment.
#[derive(Debug, Clone, Serialize)]
pub struct LlnRow {
    pub n: usize,
    pub nodes: usize,
    pub rho: f64,
    /// `E[Ξf]/ρ_n`, the quantity converging to the target.
    pub mean_over_rho: f64,
    /// `Var[Ξf]/ρ_n`, expected to decrease.
    pub variance_over_rho: f64,
    /// Monte Carlo mean of `Ξf/ρ_n`; absent when no draws were requested.
    pub mc_mean_over_rho: Option<f64>,
    /// Standard error of the Monte Carlo mean of `Ξf` (not divided by ρ).
    pub mc_standard_error: Option<f64>,
    /// `∫ f dν`; absent when the improper integral diverges (e.g. `f ≡ 1`
    /// against an infinite-mass profile).
    pub target: Option<f64>,
    /// `2·exp(−ε·ρ_n/(6‖f‖_∞))`, informational only.
    pub concentration_bound: f64,
}

/// Full LLN experiment output.
#[derive(Debug, Clone, Serialize)]
pub struct LlnReport {
    pub function: String,
    pub epsilon: f64,
    pub draws: usize,
    pub seed: u64,
    pub rows: Vec<LlnRow>,
}

impl LlnReport {
    /// Stable-order JSON rendering (field order as declared).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lln report serializes")
    }

    /// One CSV row per ensemble size; absent values are empty fields.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "n,nodes,rho,mean_over_rho,variance_over_rho,mc_mean_over_rho,\
             mc_standard_error,target,concentration_bound"
        )?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e},{},{},{},{:.16e}",
                r.n,
                r.nodes,
                r.rho,
                r.mean_over_rho,
                r.variance_over_rho,
                opt(r.mc_mean_over_rho),
                opt(r.mc_standard_error),
                opt(r.target),
                r.concentration_bound
            )?;
        }
        Ok(())
    }
}

/// Run the law-of-large-numbers experiment: for each `n`, discretize with
/// `M = nodes_per_degree·n` nodes, compute `E[Ξf]/ρ_n` and `Var[Ξf]/ρ_n`
/// exactly, optionally Monte Carlo the statistic over seeded draws
/// (`draws = 0` skips sampling), and report everything against the profile
/// target `∫ f dν` and the concentration bound `2·exp(−ε·ρ_n/(6‖f‖_∞))`.
///
/// The statistic concentrates when `f` is bounded with `(1+x²)·|f|` bounded;
/// an unbounded `f` is not rejected, but its target integral will fail to
/// converge and its concentration bound degenerates to the trivial 2.
#[allow(clippy::too_many_arguments)]
pub fn lln_experiment(
    params: &JacobiParameters,
    profile: &AsymptoticProfile,
    f: &TestFunction,
    n_list: &[usize],
    draws: usize,
    seed: u64,
    policy: DiscretizationPolicy,
    epsilon: f64,
) -> Result<LlnReport> {
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "ensemble sizes must be non-empty, start at 1 or above, and be strictly ascending"
                .into(),
        ));
    }
    if policy.nodes_per_degree < 4 {
        return Err(Error::InvalidInput(format!(
            "the discretization needs at least 4 nodes per degree (got {})",
            policy.nodes_per_degree
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "the concentration epsilon must be positive and finite (got {epsilon})"
        )));
    }
    let target = match profile.integrate_density(&|x| f.raw(x)) {
        Ok(v) => Some(v),
        Err(Error::IntegralNotConverged(_)) => None,
        Err(e) => return Err(e),
    };
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let m = policy.nodes_per_degree * n;
        let dm = gauss_rule(params, m)?;
        let es = EnsembleSampler::new(params, dm, n)?;
        let rho = profile.rho(n)?;
        let mean = mean_statistic(&es, f)?;
        let var = var_statistic(&es, f)?;
        let (mc_mean_over_rho, mc_standard_error) = if draws >= 2 {
            let rep = statistic_report(&es, f, seed, draws)?;
            (Some(rep.mc_mean / rho), Some(rep.standard_error))
        } else {
            (None, None)
        };
        rows.push(LlnRow {
            n,
            nodes: m,
            rho,
            mean_over_rho: mean / rho,
            variance_over_rho: var / rho,
            mc_mean_over_rho,
            mc_standard_error,
            target,
            concentration_bound: 2.0 * (-epsilon * rho / (6.0 * f.sup_norm())).exp(),
        });
    }
    Ok(LlnReport {
        function: f.name().to_string(),
        epsilon,
        draws,
        seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobi::FamilySpec;
    use crate::nevai::FunctionKind;
    use crate::spectral::{asymptotic_profile, ProfileCase};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn freud2_params() -> JacobiParameters {
        FamilySpec::Freud { gamma: 2.0 }.build(0).unwrap()
    }

    fn cauchy() -> TestFunction {
        TestFunction::new("cauchy", FunctionKind::GeneralContinuous, 1.0, |x| {
            1.0 / (1.0 + x * x)
        })
        .unwrap()
    }

    /// Brute-force subset probabilities straight from the ensemble's raw
    /// density: `P(S) ∝ ∏_{i<j∈S}(x_j−x_i)² · ∏_{i∈S} w_i`. Uses only the
    /// nodes and weights — no feature matrix, no kernel — so it is an
    /// independent route to the same distribution.
    fn enumerate_subset_probabilities(
        dm: &DiscretizedMeasure,
        n: usize,
    ) -> Vec<(Vec<usize>, f64)> {
        let m = dm.len();
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        let mut current = Vec::with_capacity(n);
        fn rec(m: usize, n: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if current.len() == n {
                out.push(current.clone());
                return;
            }
            for i in start..m {
                current.push(i);
                rec(m, n, i + 1, current, out);
                current.pop();
            }
        }
        rec(m, n, 0, &mut current, &mut subsets);
        let mut raw = Vec::with_capacity(subsets.len());
        for s in &subsets {
            let mut p = 1.0;
            for (a, &i) in s.iter().enumerate() {
                p *= dm.weights[i];
                for &j in &s[a + 1..] {
                    let diff = dm.nodes[j] - dm.nodes[i];
                    p *= diff * diff;
                }
            }
            raw.push(p);
        }
        let total = ksum(raw.iter().copied());
        subsets
            .into_iter()
            .zip(raw)
            .map(|(s, p)| (s, p / total))
            .collect()
    }

    fn subset_key(s: &[usize]) -> Vec<usize> {
        let mut k = s.to_vec();
        k.sort_unstable();
        k
    }

    #[test]
    fn feature_rows_are_orthonormal_on_gauss_rules() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 32).unwrap();
        let es = EnsembleSampler::new(&params, dm, 8).unwrap();
        let (defect, _) = es.orthonormality_defect();
        assert!(defect <= 1e-10, "defect {defect}");
        let trace = ksum(es.kernel_masses());
        assert!((trace - 8.0).abs() <= 1e-10, "trace {trace}");
    }

    #[test]
    fn mismatched_discretizations_are_rejected_at_construction() {
        // Uniform weights on an even grid are nowhere near an orthonormal
        // discretization for Hermite-type polynomials.
        let params = freud2_params();
        let nodes: Vec<f64> = (0..16).map(|i| -3.0 + 0.4 * i as f64).collect();
        let weights = vec![1.0 / 16.0; 16];
        let dm = DiscretizedMeasure::new(nodes, weights).unwrap();
        let err = EnsembleSampler::new(&params, dm, 4).unwrap_err();
        assert!(matches!(err, Error::OrthogonalityLost { .. }), "{err}");
    }

    #[test]
    fn ensemble_size_must_fit_the_discretization() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 8).unwrap();
        assert!(matches!(
            EnsembleSampler::new(&params, dm.clone(), 9).unwrap_err(),
            Error::InvalidInput(_)
        ));
        assert!(matches!(
            EnsembleSampler::new(&params, dm, 0).unwrap_err(),
            Error::InvalidInput(_)
        ));
    }

    #[test]
    fn full_rank_ensembles_draw_every_node() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 6).unwrap();
        let es = EnsembleSampler::new(&params, dm, 6).unwrap();
        let batch = sample(&es, 7, 5).unwrap();
        for draw in &batch.draws {
            assert_eq!(draw, &vec![0, 1, 2, 3, 4, 5]);
        }
    }

    #[test]
    fn single_point_ensembles_follow_the_weights() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 6).unwrap();
        let weights = dm.weights.clone();
        let es = EnsembleSampler::new(&params, dm, 1).unwrap();
        let draws = 20_000usize;
        let batch = sample(&es, 11, draws).unwrap();
        let mut counts = vec![0usize; 6];
        for d in &batch.draws {
            counts[d[0]] += 1;
        }
        let chi2: f64 = (0..6)
            .map(|i| {
                let expected = weights[i] * draws as f64;
                let diff = counts[i] as f64 - expected;
                diff * diff / expected
            })
            .sum();
        let threshold = ChiSquared::new(5.0).unwrap().inverse_cdf(0.999);
        assert!(chi2 < threshold, "chi2 {chi2} vs threshold {threshold}");
    }

    #[test]
    fn pair_and_triple_ensembles_match_the_enumeration_oracle() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 8).unwrap();
        for (n, seed) in [(2usize, 101u64), (3usize, 102u64)] {
            let probs = enumerate_subset_probabilities(&dm, n);
            let total: f64 = probs.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);

            let es = EnsembleSampler::new(&params, dm.clone(), n).unwrap();
            let draws = 100_000usize;
            let batch = sample(&es, seed, draws).unwrap();
            let mut counts: std::collections::HashMap<Vec<usize>, usize> =
                std::collections::HashMap::new();
            for d in &batch.draws {
                *counts.entry(subset_key(d)).or_insert(0) += 1;
            }
            // Every observed subset must be one of the enumerated ones.
            let enumerated: std::collections::HashSet<Vec<usize>> =
                probs.iter().map(|(s, _)| s.clone()).collect();
            for k in counts.keys() {
                assert!(enumerated.contains(k), "draw {k:?} not a valid subset");
            }
            let mut chi2 = 0.0;
            let mut worst_sigma = 0.0f64;
            for (s, p) in &probs {
                let expected = p * draws as f64;
                let observed = counts.get(s).copied().unwrap_or(0) as f64;
                let diff = observed - expected;
                chi2 += diff * diff / expected;
                let sigma = (p * (1.0 - p) * draws as f64).sqrt();
                if sigma > 0.0 {
                    worst_sigma = worst_sigma.max(diff.abs() / sigma);
                }
            }
            let df = probs.len() as f64 - 1.0;
            let threshold = ChiSquared::new(df).unwrap().inverse_cdf(0.999);
            assert!(
                chi2 < threshold,
                "n = {n}: chi2 {chi2} vs threshold {threshold}"
            );
            assert!(worst_sigma < 3.0, "n = {n}: worst deviation {worst_sigma} sigma");
        }
    }

    #[test]
    fn exact_statistics_match_the_enumeration_oracle() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 8).unwrap();
        let n = 3;
        let probs = enumerate_subset_probabilities(&dm, n);
        let es = EnsembleSampler::new(&params, dm.clone(), n).unwrap();
        let functions = [TestFunction::polynomial("x", vec![0.0, 1.0]), cauchy()];
        for f in &functions {
            let stat = |s: &[usize]| ksum(s.iter().map(|&i| f.raw(dm.nodes[i])));
            let e_oracle = ksum(probs.iter().map(|(s, p)| p * stat(s)));
            let e2_oracle = ksum(probs.iter().map(|(s, p)| p * stat(s) * stat(s)));
            let var_oracle = e2_oracle - e_oracle * e_oracle;
            let mean = mean_statistic(&es, f).unwrap();
            let var = var_statistic(&es, f).unwrap();
            assert!(
                (mean - e_oracle).abs() <= 1e-10,
                "{}: mean {mean} vs oracle {e_oracle}",
                f.name()
            );
            assert!(
                (var - var_oracle).abs() <= 1e-10,
                "{}: var {var} vs oracle {var_oracle}",
                f.name()
            );
        }
    }

    #[test]
    fn constant_statistics_are_deterministic() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 24).unwrap();
        let es = EnsembleSampler::new(&params, dm, 6).unwrap();
        let one = TestFunction::polynomial("one", vec![1.0]);
        let zero = TestFunction::polynomial("zero", vec![0.0]);
        let c = TestFunction::polynomial("three", vec![3.0]);
        assert!((mean_statistic(&es, &one).unwrap() - 6.0).abs() <= 1e-12);
        assert_eq!(mean_statistic(&es, &zero).unwrap(), 0.0);
        assert!(var_statistic(&es, &one).unwrap().abs() <= 1e-10);
        assert!(var_statistic(&es, &zero).unwrap().abs() <= 1e-12);
        assert!(var_statistic(&es, &c).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn variance_stays_nonnegative_across_the_battery() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 32).unwrap();
        let es = EnsembleSampler::new(&params, dm, 8).unwrap();
        for f in crate::nevai::battery() {
            let var = var_statistic(&es, &f).unwrap();
            assert!(var >= -1e-10, "{}: var {var}", f.name());
        }
    }

    #[test]
    fn identical_seeds_reproduce_batches_and_streams_are_stable() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 16).unwrap();
        let es = EnsembleSampler::new(&params, dm, 4).unwrap();
        let a = sample(&es, 9000, 6).unwrap();
        let b = sample(&es, 9000, 6).unwrap();
        assert_eq!(a, b);
        // Draw j depends only on (seed, j), not on the batch size.
        let c = sample(&es, 9000, 3).unwrap();
        assert_eq!(&a.draws[..3], &c.draws[..]);
        let d = sample(&es, 9001, 6).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn statistic_reports_carry_consistent_errors() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 16).unwrap();
        let es = EnsembleSampler::new(&params, dm, 4).unwrap();
        let f = cauchy();
        let rep = statistic_report(&es, &f, 5, 400).unwrap();
        assert_eq!(rep.draws, 400);
        assert!(
            (rep.standard_error - (rep.mc_variance / 400.0).sqrt()).abs() <= 1e-15
        );
        // The Monte Carlo mean should sit within a few standard errors of
        // the exact mean.
        assert!(
            (rep.mc_mean - rep.exact_mean).abs() <= 4.0 * rep.standard_error,
            "mc {} vs exact {} (se {})",
            rep.mc_mean,
            rep.exact_mean,
            rep.standard_error
        );
        let json = rep.to_json();
        assert!(json.contains("\"exact_mean\""), "{json}");
        assert!(json.contains("\"standard_error\""), "{json}");

        assert!(matches!(
            statistic_report(&es, &f, 5, 1).unwrap_err(),
            Error::InvalidInput(_)
        ));
    }

    #[test]
    fn sample_batches_export_as_csv() {
        let params = freud2_params();
        let dm = gauss_rule(&params, 8).unwrap();
        let es = EnsembleSampler::new(&params, dm, 3).unwrap();
        let batch = sample(&es, 1, 4).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "draw_index,node_0,node_1,node_2");
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().starts_with("0,"));
    }

    #[test]
    fn lln_rows_track_the_cauchy_target() {
        let params = freud2_params();
        let profile = FamilySpec::Freud { gamma: 2.0 }.natural_profile().unwrap();
        let ap = asymptotic_profile(&params, &profile, ProfileCase::I).unwrap();
        let report = lln_experiment(
            &params,
            &ap,
            &cauchy(),
            &[16, 64, 256],
            0,
            1,
            DiscretizationPolicy::default(),
            DEFAULT_CONCENTRATION_EPSILON,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 3);
        let target = report.rows[0].target.unwrap();
        assert!((target - 0.5).abs() < 1e-8, "target {target}");
        let devs: Vec<f64> = report
            .rows
            .iter()
            .map(|r| (r.mean_over_rho - 0.5).abs())
            .collect();
        assert!(
            devs.windows(2).all(|w| w[1] < w[0]),
            "mean deviations should shrink: {devs:?}"
        );
        let vars: Vec<f64> = report.rows.iter().map(|r| r.variance_over_rho).collect();
        assert!(
            vars.windows(2).all(|w| w[1] < w[0]),
            "scaled variances should shrink: {vars:?}"
        );
        let bounds: Vec<f64> = report.rows.iter().map(|r| r.concentration_bound).collect();
        assert!(bounds.iter().all(|&b| b > 0.0 && b < 2.0));
        assert!(bounds.windows(2).all(|w| w[1] < w[0]));
        assert!(report.rows.iter().all(|r| r.mc_mean_over_rho.is_none()));

        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,nodes,rho,"));
        assert_eq!(text.lines().count(), 4);
        let json = report.to_json();
        assert!(json.contains("\"mean_over_rho\""), "{json}");
    }

    #[test]
    fn lln_handles_the_unit_statistic_exactly() {
        let params = freud2_params();
        let profile = FamilySpec::Freud { gamma: 2.0 }.natural_profile().unwrap();
        let ap = asymptotic_profile(&params, &profile, ProfileCase::I).unwrap();
        let one = TestFunction::polynomial("one", vec![1.0]);
        let report = lln_experiment(
            &params,
            &ap,
            &one,
            &[8, 16],
            8,
            3,
            DiscretizationPolicy::default(),
            DEFAULT_CONCENTRATION_EPSILON,
        )
        .unwrap();
        for row in &report.rows {
            let expected = row.n as f64 / row.rho;
            assert!((row.mean_over_rho - expected).abs() <= 1e-12 * expected);
            assert!(row.variance_over_rho.abs() <= 1e-10);
            // The statistic is deterministically n, so Monte Carlo agrees
            // exactly and the spread is zero.
            assert!((row.mc_mean_over_rho.unwrap() - expected).abs() <= 1e-12 * expected);
            assert!(row.mc_standard_error.unwrap().abs() <= 1e-12);
            // A constant has infinite-mass target against this profile.
            assert!(row.target.is_none());
            assert_eq!(row.concentration_bound, 2.0);
        }
    }

    #[test]
    fn lln_validates_its_controls() {
        let params = freud2_params();
        let profile = FamilySpec::Freud { gamma: 2.0 }.natural_profile().unwrap();
        let ap = asymptotic_profile(&params, &profile, ProfileCase::I).unwrap();
        let f = cauchy();
        let thin = DiscretizationPolicy { nodes_per_degree: 2 };
        assert!(matches!(
            lln_experiment(&params, &ap, &f, &[8], 0, 1, thin, 0.1).unwrap_err(),
            Error::InvalidInput(_)
        ));
        let ok = DiscretizationPolicy::default();
        assert!(matches!(
            lln_experiment(&params, &ap, &f, &[8, 4], 0, 1, ok, 0.1).unwrap_err(),
            Error::InvalidInput(_)
        ));
        assert!(matches!(
            lln_experiment(&params, &ap, &f, &[8], 0, 1, ok, 0.0).unwrap_err(),
            Error::InvalidInput(_)
        ));
    }
}
