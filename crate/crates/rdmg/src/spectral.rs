//! Dense spectral oracle for preconditioned operators.
//!
//! For problems small enough to materialize, this computes every eigenvalue
//! of `B A`: the preconditioner is applied to all unit vectors, factored as
//! `B = L L^T`, and the similar symmetric matrix `L^T A L` is reduced to
//! tridiagonal form and handed to the bisection solver. The reported
//! spectrum feeds three consumers: exact condition numbers to validate the
//! Lanczos estimates, the gap scan that counts isolated near-kernel modes,
//! and the effective condition number that ignores them.

use nalgebra::DMatrix;

use crate::eig::tridiagonal_eigenvalues;
use crate::krylov::Precond;
use crate::sparse::SparseOperator;
use crate::{Error, Result};

/// Default size cap for [`dense_spectrum`]; beyond this the `O(n^3)` path
/// stops being worth it and callers should rely on Lanczos estimates.
pub const DEFAULT_DENSE_LIMIT: usize = 4000;

/// Default eigenvalue ratio that counts as a spectral gap.
pub const DEFAULT_GAP_THRESHOLD: f64 = 10.0;

/// Full spectrum of a preconditioned operator plus the gap analysis.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Eigenvalues of `B A`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Number of isolated small eigenvalues found by the gap scan with the
    /// default threshold (0 when the low end of the spectrum is flat).
    pub m_detected: usize,
    /// Plain condition number `lambda_max / lambda_min`.
    pub kappa: f64,
    /// Effective condition number ignoring the `m_detected` smallest
    /// eigenvalues; equal to `kappa` when no gap was found.
    pub kappa_m: f64,
    /// Index of the detected gap (eigenvalue count below it), if any.
    pub gap_location: Option<usize>,
}

/// Sparse-times-dense product, one matvec per column.
fn matmul_dense(a: &SparseOperator, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.n_rows(), rhs.ncols());
    let mut col = vec![0.0; rhs.nrows()];
    let mut prod = vec![0.0; a.n_rows()];
    for j in 0..rhs.ncols() {
        col.copy_from_slice(rhs.column(j).as_slice());
        a.matvec_into(&col, &mut prod);
        for i in 0..a.n_rows() {
            out[(i, j)] = prod[i];
        }
    }
    out
}

/// Compute every eigenvalue of `B A`. Refuses problems larger than
/// `n_limit` rows; fails if the materialized preconditioner is not positive
/// definite (it must be, for CG to be meaningful).
pub fn dense_spectrum(
    a: &SparseOperator,
    precond: &impl Precond,
    n_limit: usize,
) -> Result<SpectralReport> {
    let n = a.n_rows();
    if n > n_limit {
        return Err(Error::TooLargeForDense { n, limit: n_limit });
    }
    if a.n_cols() != n {
        return Err(Error::ShapeMismatch(format!(
            "dense spectrum of a {}x{} operator",
            n,
            a.n_cols()
        )));
    }

    // materialize B column by column; averaging with the transpose removes
    // the ulp-level asymmetry of the floating-point application
    let mut b = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = precond.apply(&e)?;
        e[j] = 0.0;
        for i in 0..n {
            b[(i, j)] = col[i];
        }
    }
    let b = 0.5 * (&b + b.transpose());

    let chol = nalgebra::Cholesky::new(b).ok_or(Error::Indefinite {
        context: "preconditioner",
        value: f64::NAN,
    })?;
    let l = chol.unpack();

    // B A is similar to L^T A L: if L^T A L v = t v and w = L v then
    // B A w = L L^T A L v = t L v = t w
    let al = matmul_dense(a, &l);
    let m = l.transpose() * al;
    let m = 0.5 * (&m + m.transpose());

    let tri = nalgebra::linalg::SymmetricTridiagonal::new(m);
    let diag: Vec<f64> = tri.diagonal().iter().copied().collect();
    let off: Vec<f64> = tri.off_diagonal().iter().copied().collect();
    let mut eigenvalues = tridiagonal_eigenvalues(&diag, &off);
    eigenvalues.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let m_detected = isolated_count(&eigenvalues, DEFAULT_GAP_THRESHOLD);
    let kappa = eigenvalues[n - 1] / eigenvalues[0];
    let kappa_m = eigenvalues[n - 1] / eigenvalues[m_detected];
    Ok(SpectralReport {
        m_detected,
        kappa,
        kappa_m,
        gap_location: (m_detected > 0).then_some(m_detected),
        eigenvalues,
    })
}

/// Gap scan over the low end of an ascending spectrum: examine the ratios
/// `lambda_{i+1} / lambda_i` for `i = 1 ..= ceil(5% of n)` and report the
/// position of the largest one, provided it reaches `gap_threshold`.
/// Returns the number of eigenvalues below the gap, 0 if none qualifies.
fn isolated_count(eigenvalues: &[f64], gap_threshold: f64) -> usize {
    let n = eigenvalues.len();
    if n < 2 {
        return 0;
    }
    let window = (n as f64 * 0.05).ceil() as usize;
    let mut best = 0;
    let mut best_ratio = 0.0;
    for i in 1..=window.min(n - 1) {
        let ratio = eigenvalues[i] / eigenvalues[i - 1];
        if ratio > best_ratio {
            best_ratio = ratio;
            best = i;
        }
    }
    if best_ratio >= gap_threshold {
        best
    } else {
        0
    }
}

/// Rerun the gap scan with a caller-chosen threshold.
pub fn detect_isolated(report: &SpectralReport, gap_threshold: f64) -> usize {
    isolated_count(&report.eigenvalues, gap_threshold)
}

/// `lambda_max / lambda_{m+1}`: the condition number seen by CG once the
/// `m` isolated modes have been captured.
pub fn effective_condition(report: &SpectralReport, m: usize) -> Result<f64> {
    let n = report.eigenvalues.len();
    if m >= n {
        return Err(Error::IndexOutOfRange { m, n });
    }
    Ok(report.eigenvalues[n - 1] / report.eigenvalues[m])
}
