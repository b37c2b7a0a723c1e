//! Small shared numeric utilities: compensated summation, deterministic
//! dot products, root bracketing/bisection, and polynomial least squares.

/// Kahan–Babuska compensated sum. Deterministic for a fixed input order.
pub fn ksum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Compensated dot product of equal-length slices.
pub fn kdot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    ksum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Evaluate a polynomial given by monomial coefficients `c[0] + c[1] x + ...`.
pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut v = 0.0;
    for &c in coeffs.iter().rev() {
        v = v * x + c;
    }
    v
}

/// Bisection refinement of a bracketed sign change of `f` on `[lo, hi]`
/// down to an interval of width `tol`. Returns the midpoint.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0, "bisect requires a bracketing interval");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval at floating point resolution
        }
        let fm = f(mid);
        if (fm >= 0.0) == (flo >= 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares fit of a polynomial of the given degree through the sample
/// points, via normal equations (degrees here are at most 2).
///
/// Returns monomial coefficients of length `degree + 1`.
pub fn poly_fit(xs: &[f64], ys: &[f64], degree: usize) -> Vec<f64> {
    assert!(xs.len() == ys.len() && xs.len() > degree);
    let m = degree + 1;
    // Normal equations G c = r with G_{ij} = sum x^{i+j}, r_i = sum y x^i.
    let mut g = vec![vec![0.0; m]; m];
    let mut r = vec![0.0; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut xp = vec![1.0; 2 * m - 1];
        for k in 1..2 * m - 1 {
            xp[k] = xp[k - 1] * x;
        }
        for i in 0..m {
            for j in 0..m {
                g[i][j] += xp[i + j];
            }
            r[i] += y * xp[i];
        }
    }
    solve_dense(&mut g, &mut r);
    r
}

/// In-place Gaussian elimination with partial pivoting for the tiny dense
/// systems used by the polynomial fitter. Solution overwrites `rhs`.
fn solve_dense(a: &mut [Vec<f64>], rhs: &mut [f64]) {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        rhs.swap(col, piv);
        let d = a[col][col];
        assert!(d != 0.0, "singular normal equations");
        for row in col + 1..n {
            let f = a[row][col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut v = rhs[col];
        for k in col + 1..n {
            v -= a[col][k] * rhs[k];
        }
        rhs[col] = v / a[col][col];
    }
}

/// Evenly spaced grid with `count >= 2` points including both endpoints.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && hi > lo);
    let step = (hi - lo) / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ksum_recovers_cancellation() {
        // 1 + 1e-16 repeated: plain summation loses the small terms.
        let mut vals = vec![1.0];
        vals.extend(std::iter::repeat(1e-16).take(10_000));
        let s = ksum(vals.iter().copied());
        assert!((s - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-13);
        assert!((r - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn poly_fit_exact_on_quadratic() {
        let xs = [-2.0, -1.0, 0.5, 1.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|&x| 2.0 - 3.0 * x + 0.5 * x * x).collect();
        let c = poly_fit(&xs, &ys, 2);
        assert!((c[0] - 2.0).abs() < 1e-10);
        assert!((c[1] + 3.0).abs() < 1e-10);
        assert!((c[2] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn poly_eval_horner() {
        assert_eq!(poly_eval(&[1.0, 0.0, 2.0], 3.0), 19.0);
    }
}
