//! Measurement tools for the stable-decomposition analysis behind the
//! multilevel preconditioners.
//!
//! The central object is a quasi-interpolation operator `Pi_k` onto each
//! level, built from the biorthogonal dual of the nodal basis: the value at
//! a vertex is the integral of the function against the dual function of
//! one *owner* cell touching that vertex. On interfaces the owner is chosen
//! in the subdomain of highest coefficient rank, which is exactly what makes
//! the decomposition `v = sum_k (Pi_k - Pi_{k-1}) v` stable with constants
//! independent of the coefficient jump; flipping the ordering breaks that
//! independence, and the measurement functions here let tests observe both
//! behaviors numerically.
//!
//! All integrals are exact: the integrand is piecewise polynomial on the
//! finest mesh, so every quantity reduces to element mass matrices of the
//! finest cells against barycentric coordinates of their ancestor cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::assembly::{
    barycentric_gradients, check_weights, element_contrib, weighted_mass_full,
    weighted_stiffness_full,
};
use crate::coefficients::{CoefficientField, SubdomainInfo};
use crate::krylov::pcg;
use crate::mesh::{interpolate_nodal, Mesh, MeshHierarchy};
use crate::multilevel::Preconditioner;
use crate::sparse::{axpy, dot, norm2, SparseOperator, Vector};
use crate::{Error, Result};

/// Worst biorthogonality defect over all cells of a mesh: the largest
/// deviation of `integral of mu_i lambda_j` from the Kronecker delta. Zero
/// up to rounding by construction of the dual basis; measuring it end to
/// end guards the closed-form dual values against geometry bugs.
pub fn biorthogonality_residual(mesh: &Mesh) -> Result<f64> {
    let dim = mesh.dim;
    let nv = dim + 1;
    let dp1 = (dim + 1) as f64;
    let dp2 = (dim + 2) as f64;
    let mut worst = 0.0f64;
    for t in 0..mesh.n_cells() {
        let pts = mesh.cell_points(t);
        let mass = element_contrib(dim, &pts[..nv], 0.0, 1.0)?;
        let volume = crate::mesh::cell_volume(mesh, t);
        for i in 0..nv {
            for j in 0..nv {
                let mut integral = 0.0;
                for q in 0..nv {
                    let mu = dp1 * (dp2 * if q == i { 1.0 } else { 0.0 } - 1.0) / volume;
                    integral += mu * mass.get(q, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((integral - expect).abs());
            }
        }
    }
    Ok(worst)
}

/// Random member of the constrained space on `mesh`: standard-normal nodal
/// coefficients with Dirichlet rows zeroed.
pub fn random_test_function(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Vector {
    (0..mesh.n_vertices())
        .map(|x| {
            if mesh.vertex_is_dirichlet[x] {
                0.0
            } else {
                rng.sample(StandardNormal)
            }
        })
        .collect()
}

/// For every vertex, the cell whose dual function represents it: the
/// touching cell with the best (lowest) subdomain rank, ties broken by cell
/// index so the choice is reproducible.
fn owner_cells(mesh: &Mesh, ordering: &SubdomainInfo) -> Vec<usize> {
    let mut owner = vec![usize::MAX; mesh.n_vertices()];
    let mut best = vec![(usize::MAX, usize::MAX); mesh.n_vertices()];
    for c in 0..mesh.n_cells() {
        let key = (ordering.rank(mesh.cell_subdomain[c]), c);
        for &x in mesh.cell(c) {
            if key < best[x] {
                best[x] = key;
                owner[x] = c;
            }
        }
    }
    owner
}

/// Geometry of one ancestor cell, enough to evaluate its barycentric
/// coordinates at arbitrary points.
struct AncestorGeometry {
    grads: [[f64; 3]; 4],
    p0: [f64; 3],
    volume: f64,
}

fn ancestor_geometry(mesh: &Mesh, c: usize) -> Result<AncestorGeometry> {
    let pts = mesh.cell_points(c);
    let (grads, volume) = barycentric_gradients(mesh.dim, &pts)?;
    Ok(AncestorGeometry {
        grads,
        p0: pts[0],
        volume,
    })
}

/// Per-fine-cell data for the composite integrals: the fine element mass
/// matrix and `lam[q][slot]`, the barycentric coordinates of the fine
/// vertices with respect to the ancestor cell.
struct FineCellData {
    mass: crate::assembly::ElementMatrix,
    lam: [[f64; 4]; 4],
}

fn fine_cell_data(finest: &Mesh, t: usize, geo: &AncestorGeometry) -> Result<FineCellData> {
    let dim = finest.dim;
    let nv = dim + 1;
    let cell_t = finest.cell(t);
    let mut pts = [[0.0; 3]; 4];
    for (slot, &p) in cell_t.iter().enumerate() {
        pts[slot] = finest.vertices[p];
    }
    let mass = element_contrib(dim, &pts[..nv], 0.0, 1.0)?;
    let mut lam = [[0.0; 4]; 4];
    for q in 0..nv {
        let d = [
            pts[q][0] - geo.p0[0],
            pts[q][1] - geo.p0[1],
            pts[q][2] - geo.p0[2],
        ];
        let mut rest = 0.0;
        for s in 1..nv {
            let g = geo.grads[s];
            lam[q][s] = g[0] * d[0] + g[1] * d[1] + g[2] * d[2];
            rest += lam[q][s];
        }
        lam[q][0] = 1.0 - rest;
    }
    Ok(FineCellData { mass, lam })
}

/// `mv[q] = (M_t v|_t)_q`: the fine mass matrix applied to the cell's nodal
/// values.
fn mass_times_values(finest: &Mesh, t: usize, data: &FineCellData, v: &[f64]) -> [f64; 4] {
    let nv = finest.dim + 1;
    let cell_t = finest.cell(t);
    let mut mv = [0.0; 4];
    for q in 0..nv {
        for p in 0..nv {
            mv[q] += data.mass.get(q, p) * v[cell_t[p]];
        }
    }
    mv
}

/// Quasi-interpolation of a finest-level function onto level `k`: the nodal
/// value at each free vertex `x` is the integral of `v` against the dual
/// basis function of `x` on its owner cell, and zero at Dirichlet vertices
/// so the result stays in the constrained space. Exact for members of the
/// level-`k` space that vanish on the boundary; the identity on the finest
/// level for such functions.
pub fn dual_interpolate(
    hierarchy: &MeshHierarchy,
    k: usize,
    v: &[f64],
    ordering: &SubdomainInfo,
) -> Result<Vector> {
    let finest = hierarchy.finest();
    if v.len() != finest.n_vertices() {
        return Err(Error::ShapeMismatch(format!(
            "{} nodal values for a finest mesh with {} vertices",
            v.len(),
            finest.n_vertices()
        )));
    }
    let target = hierarchy.level(k)?;
    if ordering.n_subdomains() < target.n_subdomains() {
        return Err(Error::MissingCoefficient {
            have: ordering.n_subdomains(),
            need: target.n_subdomains(),
        });
    }
    let ancestors = hierarchy.ancestor_cells(k)?;
    let owner = owner_cells(target, ordering);
    let dim = finest.dim;
    let nv = dim + 1;
    let dp1 = (dim + 1) as f64;
    let dp2 = (dim + 2) as f64;

    let mut out = vec![0.0; target.n_vertices()];
    for t in 0..finest.n_cells() {
        let c = ancestors[t];
        let cell_c = target.cell(c);
        if !cell_c.iter().any(|&x| owner[x] == c) {
            continue;
        }
        let geo = ancestor_geometry(target, c)?;
        let data = fine_cell_data(finest, t, &geo)?;
        let mv = mass_times_values(finest, t, &data, v);
        let scale = dp1 / geo.volume;
        for (slot, &x) in cell_c.iter().enumerate() {
            if owner[x] != c {
                continue;
            }
            let mut acc = 0.0;
            for q in 0..nv {
                acc += mv[q] * (dp2 * data.lam[q][slot] - 1.0);
            }
            out[x] += acc * scale;
        }
    }
    for (x, flag) in target.vertex_is_dirichlet.iter().enumerate() {
        if *flag {
            out[x] = 0.0;
        }
    }
    Ok(out)
}

/// The same quasi-interpolation assembled as an explicit matrix mapping
/// finest nodal values to level-`k` nodal values, for norm computations
/// that need the operator rather than its action.
pub fn dual_interpolation_operator(
    hierarchy: &MeshHierarchy,
    k: usize,
    ordering: &SubdomainInfo,
) -> Result<SparseOperator> {
    let finest = hierarchy.finest();
    let target = hierarchy.level(k)?;
    if ordering.n_subdomains() < target.n_subdomains() {
        return Err(Error::MissingCoefficient {
            have: ordering.n_subdomains(),
            need: target.n_subdomains(),
        });
    }
    let ancestors = hierarchy.ancestor_cells(k)?;
    let owner = owner_cells(target, ordering);
    let dim = finest.dim;
    let nv = dim + 1;
    let dp1 = (dim + 1) as f64;
    let dp2 = (dim + 2) as f64;

    let mut triplets = Vec::new();
    for t in 0..finest.n_cells() {
        let c = ancestors[t];
        let cell_c = target.cell(c);
        if !cell_c
            .iter()
            .any(|&x| owner[x] == c && !target.vertex_is_dirichlet[x])
        {
            continue;
        }
        let geo = ancestor_geometry(target, c)?;
        let data = fine_cell_data(finest, t, &geo)?;
        let cell_t = finest.cell(t);
        let scale = dp1 / geo.volume;
        for (slot, &x) in cell_c.iter().enumerate() {
            if owner[x] != c || target.vertex_is_dirichlet[x] {
                continue;
            }
            for (p_slot, &p) in cell_t.iter().enumerate() {
                let mut w = 0.0;
                for q in 0..nv {
                    w += data.mass.get(q, p_slot) * (dp2 * data.lam[q][slot] - 1.0);
                }
                triplets.push((x, p, w * scale));
            }
        }
    }
    Ok(SparseOperator::from_triplets(
        target.n_vertices(),
        finest.n_vertices(),
        triplets,
    ))
}

/// `tau`-weighted L2 projection of a finest-level function onto level `k`.
/// The weight may vanish on some subdomains; vertices whose entire patch
/// carries zero weight are pinned to zero (their value is arbitrary in the
/// weighted inner product). Fails only if the weight vanishes everywhere.
pub fn weighted_l2_project(
    hierarchy: &MeshHierarchy,
    k: usize,
    v: &[f64],
    tau: &[f64],
) -> Result<Vector> {
    let finest = hierarchy.finest();
    if v.len() != finest.n_vertices() {
        return Err(Error::ShapeMismatch(format!(
            "{} nodal values for a finest mesh with {} vertices",
            v.len(),
            finest.n_vertices()
        )));
    }
    let target = hierarchy.level(k)?;
    check_weights(target, tau)?;
    let ancestors = hierarchy.ancestor_cells(k)?;
    let dim = finest.dim;
    let nv = dim + 1;

    // right-hand side: exact integrals of tau * v against the level hats
    let mut rhs = vec![0.0; target.n_vertices()];
    for t in 0..finest.n_cells() {
        let tau_t = tau[finest.cell_subdomain[t]];
        if tau_t == 0.0 {
            continue;
        }
        let c = ancestors[t];
        let geo = ancestor_geometry(target, c)?;
        let data = fine_cell_data(finest, t, &geo)?;
        let mv = mass_times_values(finest, t, &data, v);
        for (slot, &x) in target.cell(c).iter().enumerate() {
            let mut acc = 0.0;
            for q in 0..nv {
                acc += mv[q] * data.lam[q][slot];
            }
            rhs[x] += tau_t * acc;
        }
    }

    let mass = weighted_mass_full(target, tau)?;
    let diag = mass.diagonal();
    let active: Vec<usize> = (0..diag.len()).filter(|&i| diag[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::AllZeroWeight);
    }
    let mut slot_of = vec![None; diag.len()];
    for (s, &i) in active.iter().enumerate() {
        slot_of[i] = Some(s);
    }
    let mut triplets = Vec::new();
    for (si, &i) in active.iter().enumerate() {
        let (cols, vals) = mass.row(i);
        for (&j, &a) in cols.iter().zip(vals) {
            if let Some(sj) = slot_of[j] {
                triplets.push((si, sj, a));
            }
        }
    }
    let reduced =
        SparseOperator::from_triplets(active.len(), active.len(), triplets).tag_symmetric()?;
    let rhs_reduced: Vector = active.iter().map(|&i| rhs[i]).collect();
    let precond = Preconditioner::jacobi(&reduced)?;
    let report = pcg(&reduced, &precond, &rhs_reduced, 1e-13, 10_000)?;

    let mut out = vec![0.0; target.n_vertices()];
    for (s, &i) in active.iter().enumerate() {
        out[i] = report.solution[s];
    }
    Ok(out)
}

/// Norm ratios of the multilevel decomposition of one function.
#[derive(Debug, Clone)]
pub struct DecompositionReport {
    /// `(|w_0|^2_{1,omega} + sum_k h_k^{-2} ||w_k||^2_{0,omega})` over
    /// `|v|^2_{1,omega}`: the weighted H1 stability constant.
    pub h1_ratio: f64,
    /// `sum_k ||w_k||^2_{0,rho}` over `||v||^2_{0,rho}`; NaN when the
    /// reaction weight is identically zero.
    pub reaction_ratio: f64,
    /// Combined ratio against the full energy `a(v, v)`.
    pub energy_ratio: f64,
    /// Relative L2 mismatch between `sum_k w_k` and `v`; the telescoping
    /// sum is exact in theory, so this is pure floating-point noise.
    pub sum_error: f64,
    /// The individual numerator terms, coarse first: `|w_0|^2_{1,omega}`,
    /// then `h_k^{-2} ||w_k||^2_{0,omega}` per finer level.
    pub level_terms: Vec<f64>,
}

/// Split `v` into `w_0 = Pi_0 v` and `w_k = (Pi_k - Pi_{k-1}) v`, then
/// report the decomposition norms relative to the norms of `v` itself.
pub fn measure_decomposition(
    hierarchy: &MeshHierarchy,
    omega: &CoefficientField,
    rho: &CoefficientField,
    ordering: &SubdomainInfo,
    v: &[f64],
) -> Result<DecompositionReport> {
    let l = hierarchy.top_level();
    let finest = hierarchy.finest();
    omega.check_covers(finest)?;
    rho.check_covers(finest)?;

    let mut interpolants = Vec::with_capacity(l + 1);
    for k in 0..=l {
        interpolants.push(dual_interpolate(hierarchy, k, v, ordering)?);
    }
    let mut pieces = vec![interpolants[0].clone()];
    for k in 1..=l {
        let lifted = interpolate_nodal(&hierarchy.meshes[k], &interpolants[k - 1]);
        let piece: Vector = interpolants[k]
            .iter()
            .zip(&lifted)
            .map(|(a, b)| a - b)
            .collect();
        pieces.push(piece);
    }

    let mut sum = vec![0.0; finest.n_vertices()];
    for (k, piece) in pieces.iter().enumerate() {
        let embedded = hierarchy.embed_nodal(k, piece)?;
        axpy(1.0, &embedded, &mut sum);
    }
    let v_norm = norm2(v);
    let mut mismatch = sum.clone();
    axpy(-1.0, v, &mut mismatch);
    let sum_error = if v_norm > 0.0 {
        norm2(&mismatch) / v_norm
    } else {
        norm2(&mismatch)
    };

    let s0 = weighted_stiffness_full(&hierarchy.meshes[0], omega.values())?;
    let mut level_terms = vec![dot(&pieces[0], &s0.matvec(&pieces[0]))];
    for k in 1..=l {
        let mesh = &hierarchy.meshes[k];
        let m = weighted_mass_full(mesh, omega.values())?;
        let term = dot(&pieces[k], &m.matvec(&pieces[k])) / (mesh.h * mesh.h);
        level_terms.push(term);
    }
    let h1_num: f64 = level_terms.iter().sum();
    let s_fine = weighted_stiffness_full(finest, omega.values())?;
    let v_vec = v.to_vec();
    let h1_den = dot(&v_vec, &s_fine.matvec(&v_vec));

    let rho_active = rho.values().iter().any(|&r| r > 0.0);
    let (rho_num, rho_den) = if rho_active {
        let mut num = 0.0;
        for (k, piece) in pieces.iter().enumerate() {
            let m = weighted_mass_full(&hierarchy.meshes[k], rho.values())?;
            num += dot(piece, &m.matvec(piece));
        }
        let m_fine = weighted_mass_full(finest, rho.values())?;
        (num, dot(&v_vec, &m_fine.matvec(&v_vec)))
    } else {
        (0.0, 0.0)
    };

    Ok(DecompositionReport {
        h1_ratio: h1_num / h1_den,
        reaction_ratio: if rho_active {
            rho_num / rho_den
        } else {
            f64::NAN
        },
        energy_ratio: (h1_num + rho_num) / (h1_den + rho_den),
        sum_error,
        level_terms,
    })
}

/// Strengthened Cauchy-Schwarz measurements between all level pairs.
#[derive(Debug, Clone)]
pub struct ScsReport {
    /// `ratio[j][k]`: worst case over the random draws of
    /// `|(omega grad v_k, grad v_j)| / (h_j^{-1}||v_j||_{0,omega} h_k^{-1}||v_k||_{0,omega})`.
    pub ratio: Vec<Vec<f64>>,
    /// `band_means[b]`: average of `ratio[j][j+b]` over `j`. Geometric
    /// decay of these bands is what makes the multilevel sum stable.
    pub band_means: Vec<f64>,
}

/// Probe the interaction strength between levels with seeded random nodal
/// functions, keeping the largest normalized cross-term seen over 50 draws
/// per level pair.
pub fn measure_scs(hierarchy: &MeshHierarchy, omega: &CoefficientField) -> Result<ScsReport> {
    const DRAWS: usize = 50;
    let l = hierarchy.top_level();
    let finest = hierarchy.finest();
    omega.check_covers(finest)?;
    let stiffness = weighted_stiffness_full(finest, omega.values())?;
    let mut mass = Vec::with_capacity(l + 1);
    for mesh in &hierarchy.meshes {
        mass.push(weighted_mass_full(mesh, omega.values())?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x05c5_0001);
    let mut ratio = vec![vec![0.0; l + 1]; l + 1];
    for j in 0..=l {
        for k in j..=l {
            let mut worst = 0.0f64;
            for _ in 0..DRAWS {
                let vj = random_test_function(&hierarchy.meshes[j], &mut rng);
                let vk = random_test_function(&hierarchy.meshes[k], &mut rng);
                let ej = hierarchy.embed_nodal(j, &vj)?;
                let ek = hierarchy.embed_nodal(k, &vk)?;
                let num = dot(&ek, &stiffness.matvec(&ej)).abs();
                let nj = dot(&vj, &mass[j].matvec(&vj)).sqrt() / hierarchy.meshes[j].h;
                let nk = dot(&vk, &mass[k].matvec(&vk)).sqrt() / hierarchy.meshes[k].h;
                worst = worst.max(num / (nj * nk));
            }
            ratio[j][k] = worst;
            ratio[k][j] = worst;
        }
    }

    let band_means = (0..=l)
        .map(|b| {
            let vals: Vec<f64> = (0..=(l - b)).map(|j| ratio[j][j + b]).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    Ok(ScsReport { ratio, band_means })
}

/// The `tau`-weighted L2 operator norm of the level-`k` interpolation,
/// `sup_v ||Pi_k v||_{0,tau} / ||v||_{0,tau}` over the constrained finest
/// space, computed exactly as the top generalized eigenvalue of
/// `Pi^T M_k Pi` against the finest weighted mass on the free vertices.
/// Random probing cannot expose the adversarial growth here: isotropic
/// draws put as much weight into the denominator's heavy subdomain as the
/// numerator picks up, so the worst-case direction has to be solved for.
pub fn measure_interpolation_stability(
    hierarchy: &MeshHierarchy,
    k: usize,
    tau: &[f64],
    ordering: &SubdomainInfo,
) -> Result<f64> {
    let finest = hierarchy.finest();
    let target = hierarchy.level(k)?;
    let mass_k = weighted_mass_full(target, tau)?;
    let mass_fine = weighted_mass_full(finest, tau)?;
    let pi = dual_interpolation_operator(hierarchy, k, ordering)?;
    let gram = pi.transpose().matmul(&mass_k).matmul(&pi);

    let free = finest.free_vertices();
    let mut slot_of = vec![None; finest.n_vertices()];
    for (s, &i) in free.iter().enumerate() {
        slot_of[i] = Some(s);
    }
    let nf = free.len();
    let mut g = nalgebra::DMatrix::<f64>::zeros(nf, nf);
    let mut m = nalgebra::DMatrix::<f64>::zeros(nf, nf);
    for (si, &i) in free.iter().enumerate() {
        let (cols, vals) = gram.row(i);
        for (&j, &a) in cols.iter().zip(vals) {
            if let Some(sj) = slot_of[j] {
                g[(si, sj)] = a;
            }
        }
        let (cols, vals) = mass_fine.row(i);
        for (&j, &a) in cols.iter().zip(vals) {
            if let Some(sj) = slot_of[j] {
                m[(si, sj)] = a;
            }
        }
    }

    let chol = nalgebra::Cholesky::new(m).ok_or(Error::Indefinite {
        context: "finest weighted mass",
        value: f64::NAN,
    })?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&g)
        .ok_or(Error::CoarseSolveFailed)?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::CoarseSolveFailed)?;
    let sym = 0.5 * (&z + z.transpose());
    let top = sym
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    Ok(top.sqrt())
}
