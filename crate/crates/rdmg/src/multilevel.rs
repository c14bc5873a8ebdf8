//! Transfer operators between nested levels and the two multilevel
//! preconditioners built from them.
//!
//! Prolongation is linear interpolation on the refined mesh: inherited
//! vertices copy their coarse value, edge midpoints average the two
//! endpoints. Coarse operators come from the Galerkin triple product
//! `P^T A P`, which for nested linear elements coincides with direct
//! assembly on the coarse mesh.
//!
//! The additive preconditioner applies an exact solve on the coarsest level
//! and one symmetric Gauss-Seidel pass per finer level, accumulated through
//! a single restriction/prolongation cascade (`O(N)` per application). The
//! multiplicative one is the classical V(1,1) cycle with the same symmetric
//! Gauss-Seidel smoother applied once before and once after the coarse
//! correction; the smoother is self-adjoint, so the cycle stays symmetric
//! and, being built from convergent smoothing, a contraction in the
//! operator norm.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DVector, Dyn};

use crate::assembly::assemble_operator;
use crate::coefficients::CoefficientField;
use crate::krylov::Precond;
use crate::mesh::MeshHierarchy;
use crate::sparse::{axpy, residual, SparseOperator, Vector};
use crate::{Error, Result};

/// Interpolation from the free vertices of level `k - 1` to those of level
/// `k`, `1 <= k <= top`.
pub fn build_prolongation(hierarchy: &MeshHierarchy, k: usize) -> Result<SparseOperator> {
    let top = hierarchy.top_level();
    if k == 0 || k > top {
        return Err(Error::LevelOutOfRange { k, top });
    }
    let fine = &hierarchy.meshes[k];
    let coarse = &hierarchy.meshes[k - 1];
    let refinement = fine
        .refinement
        .as_ref()
        .expect("refined meshes carry provenance");

    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); fine.n_free()];
    for (slot, &v) in fine.free_vertices().iter().enumerate() {
        if v < refinement.parent_vertex_count {
            // inherited vertex: interior in the fine mesh implies interior in
            // the coarse mesh (same coordinates), so the free index exists
            let cv = coarse
                .free_index(v)
                .expect("interior vertices stay interior on coarser levels");
            rows[slot].insert(cv, 1.0);
        } else {
            let (a, b) = refinement.midpoint_edges[v - refinement.parent_vertex_count];
            for endpoint in [a, b] {
                if let Some(c) = coarse.free_index(endpoint) {
                    rows[slot].insert(c, 0.5);
                }
            }
        }
    }
    Ok(SparseOperator::from_row_maps(coarse.n_free(), rows))
}

/// One prolongation per refinement step; entry `k - 1` maps level `k - 1`
/// into level `k`.
pub fn build_transfers(hierarchy: &MeshHierarchy) -> Result<Vec<SparseOperator>> {
    (1..=hierarchy.top_level())
        .map(|k| build_prolongation(hierarchy, k))
        .collect()
}

/// Product of the prolongations from level `k` all the way to the finest
/// level (identity for `k = top`).
pub fn composite_prolongation(
    transfers: &[SparseOperator],
    k: usize,
) -> Result<SparseOperator> {
    let top = transfers.len();
    if k > top || top == 0 {
        return Err(Error::LevelOutOfRange { k, top });
    }
    if k == top {
        return Ok(SparseOperator::identity(transfers[top - 1].n_rows()));
    }
    let mut m = transfers[k].clone();
    for p in &transfers[k + 1..] {
        m = p.matmul(&m);
    }
    Ok(m)
}

/// Galerkin triple product `P^T A P`. The result is symmetrized by
/// averaging with its transpose: the product of exactly symmetric factors
/// can drift by an ulp in floating point, and downstream code insists on
/// bitwise symmetry.
pub fn galerkin_coarsen(a_fine: &SparseOperator, p: &SparseOperator) -> Result<SparseOperator> {
    if a_fine.n_rows() != a_fine.n_cols() || a_fine.n_rows() != p.n_rows() {
        return Err(Error::ShapeMismatch(format!(
            "cannot coarsen {}x{} operator through a {}x{} prolongation",
            a_fine.n_rows(),
            a_fine.n_cols(),
            p.n_rows(),
            p.n_cols()
        )));
    }
    let coarse = p.transpose().matmul(&a_fine.matmul(p));
    let n = coarse.n_rows();
    let transposed = coarse.transpose();
    let mut triplets = Vec::with_capacity(2 * coarse.nnz());
    for m in [&coarse, &transposed] {
        for i in 0..n {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push((i, j, 0.5 * v));
            }
        }
    }
    SparseOperator::from_triplets(n, n, triplets).tag_symmetric()
}

/// Reduced operators for every level plus the ingredients of the smoothers
/// and the exact coarsest-level solve.
pub struct LevelStack {
    /// `a[k]` is the level-`k` operator; `a[top]` is assembled directly,
    /// the rest are Galerkin products.
    pub a: Vec<SparseOperator>,
    coarse: Cholesky<f64, Dyn>,
}

impl LevelStack {
    pub fn top_level(&self) -> usize {
        self.a.len() - 1
    }

    pub fn finest(&self) -> &SparseOperator {
        self.a.last().unwrap()
    }

    /// Exact solve with the coarsest operator.
    pub fn coarse_solve(&self, r: &[f64]) -> Vector {
        let rhs = DVector::from_column_slice(r);
        self.coarse.solve(&rhs).as_slice().to_vec()
    }
}

/// Assemble the finest operator and coarsen it down the hierarchy.
pub fn build_level_stack(
    hierarchy: &MeshHierarchy,
    omega: &CoefficientField,
    rho: &CoefficientField,
    transfers: &[SparseOperator],
) -> Result<LevelStack> {
    let top = hierarchy.top_level();
    if transfers.len() != top {
        return Err(Error::ShapeMismatch(format!(
            "{} transfers for a hierarchy of {} levels",
            transfers.len(),
            top + 1
        )));
    }
    let mut a = vec![assemble_operator(hierarchy.finest(), omega, rho)?];
    for k in (0..top).rev() {
        let coarser = galerkin_coarsen(a.last().unwrap(), &transfers[k])?;
        a.push(coarser);
    }
    a.reverse();

    for op in &a {
        for (row, &d) in op.diagonal().iter().enumerate() {
            if !(d > 0.0) {
                return Err(Error::ZeroDiagonal { row, value: d });
            }
        }
    }

    let coarse = Cholesky::new(a[0].to_dense()).ok_or(Error::CoarseSolveFailed)?;
    Ok(LevelStack { a, coarse })
}

/// `(D + L)^{-1} r`: one forward Gauss-Seidel sweep from a zero start.
fn forward_solve(a: &SparseOperator, r: &[f64]) -> Result<Vector> {
    let n = a.n_rows();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let mut s = r[i];
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j < i {
                s -= v * x[j];
            } else if j == i {
                diag = v;
                break; // columns are sorted: nothing below i remains
            } else {
                break;
            }
        }
        if !(diag > 0.0) {
            return Err(Error::ZeroDiagonal { row: i, value: diag });
        }
        x[i] = s / diag;
    }
    Ok(x)
}

/// `(D + U)^{-1} r`: one backward Gauss-Seidel sweep from a zero start.
fn backward_solve(a: &SparseOperator, r: &[f64]) -> Result<Vector> {
    let n = a.n_rows();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let (cols, vals) = a.row(i);
        let mut s = r[i];
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals).rev() {
            if j > i {
                s -= v * x[j];
            } else if j == i {
                diag = v;
                break;
            } else {
                break;
            }
        }
        if !(diag > 0.0) {
            return Err(Error::ZeroDiagonal { row: i, value: diag });
        }
        x[i] = s / diag;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherKind {
    Jacobi,
    SymmetricGaussSeidel,
}

/// Apply the smoother as a preconditioner: `D^{-1} r` for Jacobi,
/// `(D + U)^{-1} D (D + L)^{-1} r` for symmetric Gauss-Seidel.
pub fn smoother_apply(kind: SmootherKind, a: &SparseOperator, r: &Vector) -> Result<Vector> {
    if r.len() != a.n_rows() {
        return Err(Error::ShapeMismatch(format!(
            "residual of length {} against a {}x{} operator",
            r.len(),
            a.n_rows(),
            a.n_cols()
        )));
    }
    match kind {
        SmootherKind::Jacobi => {
            let diag = a.diagonal();
            let mut x = vec![0.0; r.len()];
            for i in 0..r.len() {
                if !(diag[i] > 0.0) {
                    return Err(Error::ZeroDiagonal {
                        row: i,
                        value: diag[i],
                    });
                }
                x[i] = r[i] / diag[i];
            }
            Ok(x)
        }
        SmootherKind::SymmetricGaussSeidel => {
            let mut u = forward_solve(a, r)?;
            let diag = a.diagonal();
            for (ui, di) in u.iter_mut().zip(&diag) {
                *ui *= di;
            }
            backward_solve(a, &u)
        }
    }
}

/// Additive multilevel preconditioner: exact solve on level 0 plus one
/// symmetric Gauss-Seidel pass per finer level. The restriction cascade
/// computes all level residuals in one downward pass and the prolongation
/// cascade accumulates the corrections on the way back up.
pub fn bpx_apply(
    stack: &LevelStack,
    transfers: &[SparseOperator],
    r: &Vector,
) -> Result<Vector> {
    let l = stack.top_level();
    if transfers.len() != l {
        return Err(Error::ShapeMismatch(format!(
            "{} transfers for a stack of {} levels",
            transfers.len(),
            l + 1
        )));
    }
    let mut level_r = Vec::with_capacity(l + 1);
    level_r.push(r.clone());
    for k in (1..=l).rev() {
        let coarser = transfers[k - 1].matvec_transpose(level_r.last().unwrap());
        level_r.push(coarser);
    }
    level_r.reverse(); // level_r[k] is now the restriction to level k

    let mut x = stack.coarse_solve(&level_r[0]);
    for k in 1..=l {
        let mut lifted = transfers[k - 1].matvec(&x);
        let smoothed =
            smoother_apply(SmootherKind::SymmetricGaussSeidel, &stack.a[k], &level_r[k])?;
        axpy(1.0, &smoothed, &mut lifted);
        x = lifted;
    }
    Ok(x)
}

/// One V(1,1) multigrid cycle applied to the residual `g` on the finest
/// level: symmetric Gauss-Seidel smoothing on either side of the coarse
/// correction, exact solve at the bottom.
pub fn mg_vcycle_apply(
    stack: &LevelStack,
    transfers: &[SparseOperator],
    g: &Vector,
) -> Result<Vector> {
    if transfers.len() != stack.top_level() {
        return Err(Error::ShapeMismatch(format!(
            "{} transfers for a stack of {} levels",
            transfers.len(),
            stack.top_level() + 1
        )));
    }
    vcycle(stack, transfers, stack.top_level(), g)
}

fn vcycle(
    stack: &LevelStack,
    transfers: &[SparseOperator],
    k: usize,
    g: &Vector,
) -> Result<Vector> {
    if k == 0 {
        return Ok(stack.coarse_solve(g));
    }
    let a = &stack.a[k];
    let mut w = smoother_apply(SmootherKind::SymmetricGaussSeidel, a, g)?;
    let coarse_r = transfers[k - 1].matvec_transpose(&residual(a, &w, g));
    let correction = vcycle(stack, transfers, k - 1, &coarse_r)?;
    axpy(1.0, &transfers[k - 1].matvec(&correction), &mut w);
    let post = smoother_apply(SmootherKind::SymmetricGaussSeidel, a, &residual(a, &w, g))?;
    axpy(1.0, &post, &mut w);
    Ok(w)
}

/// The preconditioners the benchmark exposes, all behind one type so the
/// solver and the spectral oracle can treat them uniformly.
pub enum Preconditioner<'a> {
    Identity,
    /// Stores the inverse diagonal of the operator.
    Jacobi(Vector),
    SymmetricGaussSeidel(&'a SparseOperator),
    Bpx {
        stack: &'a LevelStack,
        transfers: &'a [SparseOperator],
    },
    MultigridVcycle {
        stack: &'a LevelStack,
        transfers: &'a [SparseOperator],
    },
}

impl<'a> Preconditioner<'a> {
    pub fn jacobi(a: &SparseOperator) -> Result<Self> {
        let diag = a.diagonal();
        let mut inv = vec![0.0; diag.len()];
        for (i, &d) in diag.iter().enumerate() {
            if !(d > 0.0) {
                return Err(Error::ZeroDiagonal { row: i, value: d });
            }
            inv[i] = 1.0 / d;
        }
        Ok(Preconditioner::Jacobi(inv))
    }
}

impl Precond for Preconditioner<'_> {
    fn apply(&self, r: &Vector) -> Result<Vector> {
        match self {
            Preconditioner::Identity => Ok(r.clone()),
            Preconditioner::Jacobi(inv) => {
                if inv.len() != r.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "Jacobi preconditioner of size {} applied to a vector of length {}",
                        inv.len(),
                        r.len()
                    )));
                }
                Ok(inv.iter().zip(r).map(|(d, x)| d * x).collect())
            }
            Preconditioner::SymmetricGaussSeidel(a) => {
                smoother_apply(SmootherKind::SymmetricGaussSeidel, a, r)
            }
            Preconditioner::Bpx { stack, transfers } => bpx_apply(stack, transfers, r),
            Preconditioner::MultigridVcycle { stack, transfers } => {
                mg_vcycle_apply(stack, transfers, r)
            }
        }
    }
}
