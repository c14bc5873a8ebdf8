//! Eigenvalues of symmetric tridiagonal matrices by Sturm-sequence
//! bisection.
//!
//! Both spectral paths in this crate end at a tridiagonal matrix: the dense
//! oracle reduces `L^T A L` by Householder similarity, and the CG run yields
//! its Lanczos tridiagonal directly from the alpha/beta recurrence. Bisection
//! on the Sturm count gives every eigenvalue to near machine precision in
//! `O(n^2)` without any QR iteration, and it cannot fail to converge.

/// Number of eigenvalues of `T - x I` with negative sign, i.e. the count of
/// eigenvalues strictly below `x`, read off the `LDL^T` pivots.
fn sturm_count(diag: &[f64], off: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &d) in diag.iter().enumerate() {
        q = if i == 0 {
            d - x
        } else {
            d - x - off[i - 1] * off[i - 1] / q
        };
        // flush vanishing pivots to the negative side so the next division
        // stays finite; pivmin is far below the bisection tolerance
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues, ascending. `off` holds the `n - 1` off-diagonal entries.
pub(crate) fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(off.len(), n.saturating_sub(1));
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![diag[0]];
    }

    // Gershgorin interval containing the whole spectrum.
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += off[i - 1].abs();
        }
        if i < n - 1 {
            r += off[i].abs();
        }
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(1e-300);
    let off_max_sq = off.iter().fold(1.0f64, |m, e| m.max(e * e));
    let pivmin = f64::MIN_POSITIVE * off_max_sq;
    let tol = 4.0 * f64::EPSILON * scale;

    (0..n)
        .map(|k| {
            // invariant: count(a) <= k < count(b)
            let (mut a, mut b) = (lo - tol, hi + tol);
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if sturm_count(diag, off, mid, pivmin) <= k {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}
