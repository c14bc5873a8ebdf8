//! Linear finite element assembly for the weighted reaction-diffusion form
//! `(omega grad u, grad v) + (rho u, v)` with piecewise-constant weights.
//!
//! Barycentric gradients are constant per simplex, so the element matrices
//! have closed forms: the stiffness entry is `omega |T| g_i . g_j`, the mass
//! entry `rho |T| (1 + delta_ij) / ((d+1)(d+2))`, the load entry
//! `f |T| / (d+1)`. Homogeneous Dirichlet conditions are imposed by dropping
//! boundary rows and columns, giving the reduced free-vertex system.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::coefficients::CoefficientField;
use crate::mesh::{signed_volume, Mesh};
use crate::sparse::{SparseOperator, Vector};
use crate::{Error, Result};

/// Gradients of the barycentric coordinates of a simplex, plus its signed
/// volume. Entry `i` is the gradient of the hat function of vertex `i`.
pub(crate) fn barycentric_gradients(
    dim: usize,
    pts: &[[f64; 3]],
) -> Result<([[f64; 3]; 4], f64)> {
    let vol = signed_volume(dim, pts);
    let mut edge_max = 0.0f64;
    for a in 0..=dim {
        for b in (a + 1)..=dim {
            let e: Vec<f64> = (0..3).map(|x| pts[a][x] - pts[b][x]).collect();
            edge_max = edge_max.max((e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt());
        }
    }
    if !vol.is_finite() || vol.abs() < 1e-14 * edge_max.powi(dim as i32) {
        return Err(Error::DegenerateCell { volume: vol });
    }

    let mut g = [[0.0; 3]; 4];
    match dim {
        2 => {
            let u = [pts[1][0] - pts[0][0], pts[1][1] - pts[0][1]];
            let v = [pts[2][0] - pts[0][0], pts[2][1] - pts[0][1]];
            let det = 2.0 * vol;
            g[1] = [v[1] / det, -v[0] / det, 0.0];
            g[2] = [-u[1] / det, u[0] / det, 0.0];
            g[0] = [-g[1][0] - g[2][0], -g[1][1] - g[2][1], 0.0];
        }
        3 => {
            let u = sub(pts[1], pts[0]);
            let v = sub(pts[2], pts[0]);
            let w = sub(pts[3], pts[0]);
            let det = 6.0 * vol;
            let c = |a: [f64; 3], b: [f64; 3]| {
                [
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ]
            };
            for (i, cross) in [c(v, w), c(w, u), c(u, v)].into_iter().enumerate() {
                g[i + 1] = [cross[0] / det, cross[1] / det, cross[2] / det];
            }
            for x in 0..3 {
                g[0][x] = -g[1][x] - g[2][x] - g[3][x];
            }
        }
        _ => unreachable!("only 2D and 3D cells exist"),
    }
    Ok((g, vol))
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Barycentric coordinates of point `x` with respect to the simplex `pts`.
/// Values may be negative when `x` lies outside. Kept as the slow oracle
/// against which the batched evaluation in the theory module is checked.
#[cfg(test)]
pub(crate) fn barycentric_coords(dim: usize, pts: &[[f64; 3]], x: [f64; 3]) -> Result<[f64; 4]> {
    let (g, _) = barycentric_gradients(dim, pts)?;
    let d = sub(x, pts[0]);
    let mut lam = [0.0; 4];
    let mut rest = 0.0;
    for i in 1..=dim {
        lam[i] = g[i][0] * d[0] + g[i][1] * d[1] + g[i][2] * d[2];
        rest += lam[i];
    }
    lam[0] = 1.0 - rest;
    Ok(lam)
}

/// Dense element matrix, `(d+1) x (d+1)` entries stored row-major in a
/// fixed-size buffer to keep the assembly loop allocation-free.
pub(crate) struct ElementMatrix {
    pub n: usize,
    a: [f64; 16],
}

impl ElementMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }
}

/// `w_stiff * stiffness + w_mass * mass` of one simplex in a single pass.
pub(crate) fn element_contrib(
    dim: usize,
    pts: &[[f64; 3]],
    w_stiff: f64,
    w_mass: f64,
) -> Result<ElementMatrix> {
    let (g, vol) = barycentric_gradients(dim, pts)?;
    let vol = vol.abs();
    let n = dim + 1;
    let mass_off = w_mass * vol / ((n * (n + 1)) as f64);
    let mut a = [0.0; 16];
    for i in 0..n {
        for j in i..n {
            let dot = g[i][0] * g[j][0] + g[i][1] * g[j][1] + g[i][2] * g[j][2];
            let k = w_stiff * vol * dot + mass_off * if i == j { 2.0 } else { 1.0 };
            a[i * n + j] = k;
            a[j * n + i] = k;
        }
    }
    Ok(ElementMatrix { n, a })
}

/// Element stiffness matrix `omega |T| g_i . g_j`.
pub fn element_stiffness(dim: usize, pts: &[[f64; 3]], omega: f64) -> Result<DMatrix<f64>> {
    let e = element_contrib(dim, pts, omega, 0.0)?;
    Ok(DMatrix::from_fn(e.n, e.n, |i, j| e.get(i, j)))
}

/// Element mass matrix `rho |T| (1 + delta_ij) / ((d+1)(d+2))`.
pub fn element_mass(dim: usize, pts: &[[f64; 3]], rho: f64) -> Result<DMatrix<f64>> {
    let e = element_contrib(dim, pts, 0.0, rho)?;
    Ok(DMatrix::from_fn(e.n, e.n, |i, j| e.get(i, j)))
}

/// Element load vector for a constant right-hand side: `f |T| / (d+1)`.
pub fn element_load(dim: usize, pts: &[[f64; 3]], f: f64) -> Result<Vec<f64>> {
    let (_, vol) = barycentric_gradients(dim, pts)?;
    Ok(vec![f * vol.abs() / (dim + 1) as f64; dim + 1])
}

/// Core assembly loop shared by the public entry points. Weights are indexed
/// by subdomain; `reduce` drops Dirichlet rows and columns.
fn assemble(
    mesh: &Mesh,
    w_stiff: &[f64],
    w_mass: &[f64],
    reduce: bool,
) -> Result<SparseOperator> {
    let n = if reduce { mesh.n_free() } else { mesh.n_vertices() };
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let index = |v: usize| -> Option<usize> {
        if reduce {
            mesh.free_index(v)
        } else {
            Some(v)
        }
    };

    let mut pts = [[0.0; 3]; 4];
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        for (slot, &v) in cell.iter().enumerate() {
            pts[slot] = mesh.vertices[v];
        }
        let m = mesh.cell_subdomain[c];
        let elem = element_contrib(mesh.dim, &pts[..=mesh.dim], w_stiff[m], w_mass[m])?;
        for i in 0..elem.n {
            let Some(gi) = index(cell[i]) else { continue };
            for j in 0..elem.n {
                let Some(gj) = index(cell[j]) else { continue };
                *rows[gi].entry(gj).or_insert(0.0) += elem.get(i, j);
            }
        }
    }
    Ok(SparseOperator::from_row_maps(n, rows))
}

/// Reduced (free-vertex) operator of the full reaction-diffusion form.
/// The element loop adds the identical value to the `(i, j)` and `(j, i)`
/// slots in the same order, so the result is symmetric to the bit.
pub fn assemble_operator(
    mesh: &Mesh,
    omega: &CoefficientField,
    rho: &CoefficientField,
) -> Result<SparseOperator> {
    omega.check_covers(mesh)?;
    rho.check_covers(mesh)?;
    assemble(mesh, omega.values(), rho.values(), true)?.tag_symmetric()
}

/// Reduced load vector for a constant right-hand side.
pub fn assemble_load(mesh: &Mesh, f_const: f64) -> Vector {
    let full = assemble_load_full(mesh, f_const);
    mesh.free_vertices().iter().map(|&v| full[v]).collect()
}

/// Load vector over all vertices, Dirichlet ones included.
pub(crate) fn assemble_load_full(mesh: &Mesh, f_const: f64) -> Vector {
    let mut out = vec![0.0; mesh.n_vertices()];
    let share = f_const / (mesh.dim + 1) as f64;
    let mut pts = [[0.0; 3]; 4];
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        for (slot, &v) in cell.iter().enumerate() {
            pts[slot] = mesh.vertices[v];
        }
        let vol = signed_volume(mesh.dim, &pts[..=mesh.dim]).abs();
        for &v in cell {
            out[v] += share * vol;
        }
    }
    out
}

/// Stiffness on all vertices with one weight per subdomain. Used for energy
/// seminorms of functions that need not vanish on the boundary.
pub(crate) fn weighted_stiffness_full(mesh: &Mesh, tau: &[f64]) -> Result<SparseOperator> {
    check_weights(mesh, tau)?;
    let zeros = vec![0.0; tau.len()];
    assemble(mesh, tau, &zeros, false)?.tag_symmetric()
}

/// Mass matrix on all vertices with one weight per subdomain.
pub(crate) fn weighted_mass_full(mesh: &Mesh, tau: &[f64]) -> Result<SparseOperator> {
    check_weights(mesh, tau)?;
    let zeros = vec![0.0; tau.len()];
    assemble(mesh, &zeros, tau, false)?.tag_symmetric()
}

pub(crate) fn check_weights(mesh: &Mesh, tau: &[f64]) -> Result<()> {
    if tau.len() < mesh.n_subdomains() {
        return Err(Error::MissingCoefficient {
            have: tau.len(),
            need: mesh.n_subdomains(),
        });
    }
    if let Some(&bad) = tau.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::NegativeCoefficient(bad));
    }
    Ok(())
}
