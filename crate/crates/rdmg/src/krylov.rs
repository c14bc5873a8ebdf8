//! Preconditioned conjugate gradients with spectral estimates, plus the
//! plain stationary iteration used to measure multigrid contraction factors.
//!
//! The CG recurrence doubles as a Lanczos process: the alpha/beta
//! coefficients assemble a tridiagonal matrix whose extreme eigenvalues
//! estimate the spectrum of the preconditioned operator. Every solve
//! therefore reports an effective condition number for free, which the
//! benchmark tables lean on when problems grow past the dense oracle.

use crate::eig::tridiagonal_eigenvalues;
use crate::sparse::{axpy, dot, norm2, residual, SparseOperator, Vector};
use crate::{Error, Result};

/// Preconditioner action `z = B r`. Implemented by the multilevel
/// preconditioners as well as by any plain closure, which keeps tests and
/// one-off experiments free of wrapper types.
pub trait Precond {
    fn apply(&self, r: &Vector) -> Result<Vector>;
}

impl<F: Fn(&Vector) -> Vector> Precond for F {
    fn apply(&self, r: &Vector) -> Result<Vector> {
        Ok(self(r))
    }
}

/// Everything a single solve tells us.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Operator applications after the initial residual.
    pub iterations: usize,
    pub converged: bool,
    /// Unpreconditioned residual norms, starting with `||b||`.
    pub residual_history: Vec<f64>,
    /// CG coefficients per step; the final step stores beta = 0 because the
    /// iteration stopped before computing one. Lanczos estimates never read
    /// that slot.
    pub alpha_beta: Vec<(f64, f64)>,
    /// Extreme eigenvalue estimates of the preconditioned operator from the
    /// Lanczos tridiagonal; NaN when fewer than 2 iterations ran.
    pub lambda_min_est: f64,
    pub lambda_max_est: f64,
    pub kappa_est: f64,
    /// Geometric-mean residual reduction over the last (up to) 5 steps.
    pub conv_factor: f64,
    pub solution: Vector,
}

/// Geometric mean of the residual reduction over the trailing steps.
fn tail_conv_factor(history: &[f64]) -> f64 {
    let n = history.len() - 1;
    if n == 0 {
        return f64::NAN;
    }
    let span = n.min(5);
    let den = history[n - span];
    if den == 0.0 {
        return 0.0;
    }
    (history[n] / den).powf(1.0 / span as f64)
}

/// Conjugate gradients from a zero start, stopping when the plain residual
/// norm drops below `tol` relative to `||b||`.
pub fn pcg(
    a: &SparseOperator,
    precond: &impl Precond,
    b: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "solve of a {}x{} operator against a right-hand side of length {}",
            n,
            a.n_cols(),
            b.len()
        )));
    }

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let norm0 = norm2(&r);
    let mut history = vec![norm0];
    if norm0 == 0.0 {
        return Ok(SolveReport {
            iterations: 0,
            converged: true,
            residual_history: history,
            alpha_beta: Vec::new(),
            lambda_min_est: f64::NAN,
            lambda_max_est: f64::NAN,
            kappa_est: f64::NAN,
            conv_factor: f64::NAN,
            solution: x,
        });
    }

    let mut z = precond.apply(&r)?;
    let mut rz = dot(&r, &z);
    if !(rz > 0.0) {
        return Err(Error::Indefinite {
            context: "preconditioner",
            value: rz,
        });
    }
    let mut p = z.clone();
    let mut alpha_beta = Vec::new();
    let mut converged = false;

    while history.len() - 1 < max_iter {
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Indefinite {
                context: "operator",
                value: pap,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rn = norm2(&r);
        history.push(rn);
        if rn <= tol * norm0 {
            alpha_beta.push((alpha, 0.0));
            converged = true;
            break;
        }
        z = precond.apply(&r)?;
        let rz_next = dot(&r, &z);
        if !(rz_next > 0.0) {
            return Err(Error::Indefinite {
                context: "preconditioner",
                value: rz_next,
            });
        }
        let beta = rz_next / rz;
        alpha_beta.push((alpha, beta));
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_next;
    }

    let (lambda_min_est, lambda_max_est) =
        lanczos_estimates(&alpha_beta).unwrap_or((f64::NAN, f64::NAN));
    Ok(SolveReport {
        iterations: history.len() - 1,
        converged,
        conv_factor: tail_conv_factor(&history),
        residual_history: history,
        alpha_beta,
        lambda_min_est,
        lambda_max_est,
        kappa_est: lambda_max_est / lambda_min_est,
        solution: x,
    })
}

/// Extreme eigenvalues of the Lanczos tridiagonal encoded by the CG
/// coefficients. Needs at least two completed iterations; the beta of the
/// final pair is never read, so the 0 placeholder the solver stores there
/// is harmless.
pub fn lanczos_estimates(alpha_beta: &[(f64, f64)]) -> Result<(f64, f64)> {
    let m = alpha_beta.len();
    if m < 2 {
        return Err(Error::InsufficientData(m));
    }
    let mut diag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m - 1);
    for (j, &(alpha, _)) in alpha_beta.iter().enumerate() {
        let mut d = 1.0 / alpha;
        if j > 0 {
            let (alpha_prev, beta_prev) = alpha_beta[j - 1];
            d += beta_prev / alpha_prev;
            off.push(beta_prev.sqrt() / alpha_prev);
        }
        diag.push(d);
    }
    let eigs = tridiagonal_eigenvalues(&diag, &off);
    Ok((eigs[0], *eigs.last().unwrap()))
}

/// Stationary iteration `x <- x + B (b - A x)`, the textbook way to observe
/// the contraction factor of a multigrid cycle directly. Ten consecutive
/// residual increases are treated as divergence; the iteration also gives up
/// (unconverged, no error) after 10000 steps.
pub fn stationary_solve(
    a: &SparseOperator,
    precond: &impl Precond,
    b: &Vector,
    tol: f64,
) -> Result<SolveReport> {
    const GROWTH_LIMIT: usize = 10;
    const ITERATION_CAP: usize = 10_000;

    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "solve of a {}x{} operator against a right-hand side of length {}",
            n,
            a.n_cols(),
            b.len()
        )));
    }

    let mut x = vec![0.0; n];
    let norm0 = norm2(b);
    let mut history = vec![norm0];
    let mut converged = norm0 == 0.0;
    let mut growth_streak = 0;

    while !converged && history.len() - 1 < ITERATION_CAP {
        let r = residual(a, &x, b);
        let update = precond.apply(&r)?;
        axpy(1.0, &update, &mut x);
        let rn = norm2(&residual(a, &x, b));
        let prev = *history.last().unwrap();
        history.push(rn);
        if rn > prev {
            growth_streak += 1;
            if growth_streak >= GROWTH_LIMIT {
                return Err(Error::Divergence(GROWTH_LIMIT));
            }
        } else {
            growth_streak = 0;
        }
        converged = rn <= tol * norm0;
    }

    Ok(SolveReport {
        iterations: history.len() - 1,
        converged,
        conv_factor: tail_conv_factor(&history),
        residual_history: history,
        alpha_beta: Vec::new(),
        lambda_min_est: f64::NAN,
        lambda_max_est: f64::NAN,
        kappa_est: f64::NAN,
        solution: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_operator;
    use crate::coefficients::CoefficientField;
    use crate::mesh::build_square_mesh;
    use rand::{Rng, SeedableRng};

    fn diag_matrix(values: &[f64]) -> SparseOperator {
        SparseOperator::from_triplets(
            values.len(),
            values.len(),
            values.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
    }

    fn identity_precond() -> impl Precond {
        |r: &Vector| r.clone()
    }

    fn model_problem(seed: u64) -> (SparseOperator, Vector) {
        let mesh = build_square_mesh(4, 6).unwrap();
        let omega = CoefficientField::diffusion(vec![1.0, 20.0]).unwrap();
        let rho = CoefficientField::reaction(vec![0.5, 1.0]).unwrap();
        let a = assemble_operator(&mesh, &omega, &rho).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = (0..a.n_rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (a, b)
    }

    fn dense_solve(a: &SparseOperator, b: &Vector) -> Vector {
        let lu = a.to_dense().lu();
        lu.solve(&nalgebra::DVector::from_column_slice(b))
            .unwrap()
            .as_slice()
            .to_vec()
    }

    #[test]
    fn solves_a_model_problem_to_tolerance() {
        let (a, b) = model_problem(1);
        let report = pcg(&a, &identity_precond(), &b, 1e-12, 2000).unwrap();
        assert!(report.converged);
        let exact = dense_solve(&a, &b);
        let err: f64 = report
            .solution
            .iter()
            .zip(&exact)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-8, "solution error {err}");
        assert_eq!(report.iterations, report.residual_history.len() - 1);
        assert_eq!(report.iterations, report.alpha_beta.len());
        assert!(report.conv_factor < 1.0);
    }

    #[test]
    fn finite_termination_on_a_diagonal_spectrum() {
        // CG in exact arithmetic finishes in at most #distinct eigenvalues
        let values: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let a = diag_matrix(&values);
        let b = vec![1.0; 10];
        let report = pcg(&a, &identity_precond(), &b, 1e-12, 100).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 10);
    }

    #[test]
    fn exact_inverse_preconditioner_converges_immediately() {
        let (a, b) = model_problem(2);
        let a2 = a.clone();
        let inverse = move |r: &Vector| dense_solve(&a2, r);
        let report = pcg(&a, &inverse, &b, 1e-12, 100).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
    }

    #[test]
    fn lanczos_estimates_recover_extreme_eigenvalues() {
        let values: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let a = diag_matrix(&values);
        // general right-hand side touching all eigenvectors
        let b: Vec<f64> = (0..10).map(|i| 1.0 + (i as f64) * 0.1).collect();
        let report = pcg(&a, &identity_precond(), &b, 1e-14, 100).unwrap();
        let (lo, hi) = lanczos_estimates(&report.alpha_beta).unwrap();
        assert!((lo - 1.0).abs() < 1e-6, "lambda_min estimate {lo}");
        assert!((hi - 10.0).abs() < 1e-6, "lambda_max estimate {hi}");
        assert!((report.kappa_est - 10.0).abs() < 1e-5);
        // Ritz values always stay inside the true spectrum
        assert!(lo >= 1.0 - 1e-9 && hi <= 10.0 + 1e-9);
    }

    #[test]
    fn single_iteration_gives_no_estimates() {
        // a right-hand side that is an eigenvector converges in one step
        let a = diag_matrix(&[1.0, 2.0, 3.0]);
        let b = vec![1.0, 0.0, 0.0];
        let report = pcg(&a, &identity_precond(), &b, 1e-12, 100).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.lambda_min_est.is_nan());
        assert!(matches!(
            lanczos_estimates(&report.alpha_beta),
            Err(Error::InsufficientData(1))
        ));
    }

    #[test]
    fn energy_error_is_monotone_in_the_iteration_count() {
        let (a, b) = model_problem(3);
        let exact = dense_solve(&a, &b);
        let mut prev = f64::MAX;
        for k in 1..=8 {
            let report = pcg(&a, &identity_precond(), &b, 0.0, k).unwrap();
            let e: Vector = report
                .solution
                .iter()
                .zip(&exact)
                .map(|(x, y)| x - y)
                .collect();
            let energy = dot(&e, &a.matvec(&e));
            assert!(
                energy <= prev * (1.0 + 1e-12),
                "energy error grew at step {k}: {energy} > {prev}"
            );
            prev = energy;
        }
    }

    #[test]
    fn zero_right_hand_side_is_solved_trivially() {
        let (a, _) = model_problem(4);
        let b = vec![0.0; a.n_rows()];
        let report = pcg(&a, &identity_precond(), &b, 1e-12, 10).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert!(report.solution.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = diag_matrix(&[1.0, 2.0]);
        let b = vec![1.0; 3];
        assert!(matches!(
            pcg(&a, &identity_precond(), &b, 1e-12, 10),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            stationary_solve(&a, &identity_precond(), &b, 1e-12),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn indefinite_operator_is_reported() {
        let a = diag_matrix(&[1.0, -1.0]);
        let b = vec![0.0, 1.0];
        assert!(matches!(
            pcg(&a, &identity_precond(), &b, 1e-12, 10),
            Err(Error::Indefinite {
                context: "operator",
                ..
            })
        ));
    }

    #[test]
    fn stationary_iteration_tracks_the_contraction_factor() {
        let (a, b) = model_problem(5);
        let a2 = a.clone();
        // B = A^{-1}/2 contracts the error by exactly 1/2 per step
        let half_inverse = move |r: &Vector| {
            let mut x = dense_solve(&a2, r);
            for v in x.iter_mut() {
                *v *= 0.5;
            }
            x
        };
        let report = stationary_solve(&a, &half_inverse, &b, 1e-10).unwrap();
        assert!(report.converged);
        assert!(
            (report.conv_factor - 0.5).abs() < 1e-6,
            "factor {}",
            report.conv_factor
        );
    }

    #[test]
    fn stationary_iteration_detects_divergence() {
        let (a, b) = model_problem(6);
        let a2 = a.clone();
        // B = -A^{-1} doubles the error every step
        let wrong_sign = move |r: &Vector| {
            let mut x = dense_solve(&a2, r);
            for v in x.iter_mut() {
                *v = -*v;
            }
            x
        };
        assert!(matches!(
            stationary_solve(&a, &wrong_sign, &b, 1e-10),
            Err(Error::Divergence(10))
        ));
    }
}
