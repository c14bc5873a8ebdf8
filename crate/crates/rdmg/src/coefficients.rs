//! Piecewise-constant material coefficients and subdomain structure.
//!
//! Both PDE coefficients take one constant value per material subdomain: the
//! diffusion weight must be strictly positive, the reaction weight only
//! nonnegative. On top of the raw values this module answers two structural
//! questions that control the conditioning story:
//!
//! * which subdomains are *floating*, i.e. share no whole face with the
//!   Dirichlet boundary (each one contributes a near-kernel mode when its
//!   surroundings are much softer; touching the boundary at a lone vertex
//!   does not anchor a subdomain), and
//! * in which order the subdomains rank by a given weight, used to break
//!   ties when a point lies on an interface between materials.

use crate::mesh::{boundary_cell_faces, Mesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientRole {
    Diffusion,
    Reaction,
}

/// One constant per subdomain, validated for its role.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    values: Vec<f64>,
    pub role: CoefficientRole,
}

impl CoefficientField {
    /// Diffusion weights: every value must be strictly positive and finite.
    pub fn diffusion(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NonPositiveCoefficient(bad));
        }
        Ok(CoefficientField {
            values,
            role: CoefficientRole::Diffusion,
        })
    }

    /// Reaction weights: zero is allowed (pure diffusion), negatives are not.
    pub fn reaction(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NegativeCoefficient(bad));
        }
        Ok(CoefficientField {
            values,
            role: CoefficientRole::Reaction,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_subdomains(&self) -> usize {
        self.values.len()
    }

    /// Value on subdomain `m`.
    pub fn get(&self, m: usize) -> Result<f64> {
        self.values.get(m).copied().ok_or(Error::MissingCoefficient {
            have: self.values.len(),
            need: m + 1,
        })
    }

    /// Fail unless the field provides a value for every subdomain the mesh
    /// uses.
    pub fn check_covers(&self, mesh: &Mesh) -> Result<()> {
        let need = mesh.n_subdomains();
        if self.values.len() < need {
            return Err(Error::MissingCoefficient {
                have: self.values.len(),
                need,
            });
        }
        Ok(())
    }
}

/// max / min over the subdomain values; only meaningful (and only defined)
/// when every value is strictly positive.
pub fn jump_ratio(field: &CoefficientField) -> Result<f64> {
    if let Some(&bad) = field.values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositiveCoefficient(bad));
    }
    let max = field.values.iter().cloned().fold(f64::MIN, f64::max);
    let min = field.values.iter().cloned().fold(f64::MAX, f64::min);
    Ok(max / min)
}

/// The single weight `omega_m + h^2 rho_m` that governs level-h behavior of
/// the reaction-diffusion operator. Always a valid diffusion field because
/// omega is positive and rho nonnegative.
pub fn mesh_coefficient(
    omega: &CoefficientField,
    rho: &CoefficientField,
    h: f64,
) -> Result<CoefficientField> {
    if omega.values.len() != rho.values.len() {
        return Err(Error::ShapeMismatch(format!(
            "omega has {} subdomain values, rho has {}",
            omega.values.len(),
            rho.values.len()
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::NonPositiveCoefficient(h));
    }
    let values = omega
        .values
        .iter()
        .zip(&rho.values)
        .map(|(&w, &r)| w + h * h * r)
        .collect();
    CoefficientField::diffusion(values)
}

/// Structural facts about the subdomains of one mesh relative to a weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainInfo {
    /// Subdomains whose closure avoids the Dirichlet boundary, ascending.
    pub floating: Vec<usize>,
    /// `floating.len()`, the number of potential near-kernel modes.
    pub m0: usize,
    /// Subdomain indices sorted by descending weight, ties by index.
    /// `ordering[0]` is the stiffest subdomain.
    pub ordering: Vec<usize>,
    rank: Vec<usize>,
}

impl SubdomainInfo {
    pub fn n_subdomains(&self) -> usize {
        self.rank.len()
    }

    pub fn is_floating(&self, m: usize) -> bool {
        self.floating.binary_search(&m).is_ok()
    }

    /// Position of subdomain `m` in the descending ordering (0 = stiffest).
    pub fn rank(&self, m: usize) -> usize {
        self.rank[m]
    }
}

/// Classify each subdomain as floating or anchored and rank all subdomains
/// by the `order_by` weight (descending; ties broken by subdomain index so
/// the result is deterministic).
pub fn analyze_subdomains(mesh: &Mesh, order_by: &CoefficientField) -> Result<SubdomainInfo> {
    order_by.check_covers(mesh)?;
    let n_sub = mesh.n_subdomains();

    // Floating is a statement about boundary *measure*: a subdomain is
    // anchored only when it owns a whole (d-1)-face of the boundary.
    // Touching at a lone vertex (or an edge, in 3D) contributes nothing,
    // so such a subdomain still carries a near-kernel constant mode.
    let mut touches_boundary = vec![false; n_sub];
    for (_, c) in boundary_cell_faces(mesh) {
        touches_boundary[mesh.cell_subdomain[c]] = true;
    }
    let floating: Vec<usize> = (0..n_sub).filter(|&m| !touches_boundary[m]).collect();
    let m0 = floating.len();

    let mut ordering: Vec<usize> = (0..n_sub).collect();
    ordering.sort_by(|&a, &b| {
        order_by.values[b]
            .partial_cmp(&order_by.values[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; n_sub];
    for (r, &m) in ordering.iter().enumerate() {
        rank[m] = r;
    }

    Ok(SubdomainInfo {
        floating,
        m0,
        ordering,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cube_mesh, build_square_mesh, default_inclusions, refine_uniform};

    #[test]
    fn diffusion_rejects_nonpositive_values() {
        assert!(CoefficientField::diffusion(vec![1.0, 1e-8]).is_ok());
        assert!(matches!(
            CoefficientField::diffusion(vec![1.0, 0.0]),
            Err(Error::NonPositiveCoefficient(v)) if v == 0.0
        ));
        assert!(CoefficientField::diffusion(vec![-2.0]).is_err());
        assert!(CoefficientField::diffusion(vec![f64::NAN]).is_err());
    }

    #[test]
    fn reaction_allows_zero_but_not_negative() {
        assert!(CoefficientField::reaction(vec![0.0, 1.0]).is_ok());
        assert!(matches!(
            CoefficientField::reaction(vec![0.0, -1.0]),
            Err(Error::NegativeCoefficient(v)) if v == -1.0
        ));
    }

    #[test]
    fn jump_ratio_examples() {
        let unit = CoefficientField::diffusion(vec![1.0, 1.0]).unwrap();
        assert_eq!(jump_ratio(&unit).unwrap(), 1.0);
        let jump = CoefficientField::diffusion(vec![1e-8, 1.0]).unwrap();
        assert_eq!(jump_ratio(&jump).unwrap(), 1e8);
        let four = CoefficientField::diffusion(vec![4.0, 16.0, 8.0]).unwrap();
        assert_eq!(jump_ratio(&four).unwrap(), 4.0);
        // undefined once a zero sneaks in (legal for reaction fields)
        let with_zero = CoefficientField::reaction(vec![0.0, 1.0]).unwrap();
        assert!(jump_ratio(&with_zero).is_err());
    }

    #[test]
    fn mesh_coefficient_is_omega_plus_h_squared_rho() {
        let omega = CoefficientField::diffusion(vec![1.0, 2.0]).unwrap();
        let rho = CoefficientField::reaction(vec![3.0, 4.0]).unwrap();
        let field = mesh_coefficient(&omega, &rho, 0.5).unwrap();
        assert_eq!(field.values(), &[1.75, 3.0]);
        let short = CoefficientField::reaction(vec![3.0]).unwrap();
        assert!(mesh_coefficient(&omega, &short, 0.5).is_err());
    }

    #[test]
    fn inclusions_float_and_background_is_anchored() {
        let mesh = build_cube_mesh(4, &default_inclusions()).unwrap();
        let omega = CoefficientField::diffusion(vec![1e-8, 1.0]).unwrap();
        let info = analyze_subdomains(&mesh, &omega).unwrap();
        assert_eq!(info.floating, vec![1]);
        assert_eq!(info.m0, 1);
        assert!(info.is_floating(1));
        assert!(!info.is_floating(0));
        // stiffest first: the inclusion carries the larger weight
        assert_eq!(info.ordering, vec![1, 0]);
        assert_eq!(info.rank(1), 0);
        assert_eq!(info.rank(0), 1);
        // floating status survives refinement
        let fine = refine_uniform(&mesh);
        let fine_info = analyze_subdomains(&fine, &omega).unwrap();
        assert_eq!(fine_info.floating, vec![1]);
    }

    #[test]
    fn ordering_ties_break_by_subdomain_index() {
        let mesh = build_cube_mesh(4, &default_inclusions()).unwrap();
        let omega = CoefficientField::diffusion(vec![1.0, 1.0]).unwrap();
        let info = analyze_subdomains(&mesh, &omega).unwrap();
        assert_eq!(info.ordering, vec![0, 1]);
    }

    #[test]
    fn floating_detection_matches_a_geometric_face_scan() {
        // independent oracle: a cell facet lies on the boundary of the unit
        // domain exactly when all its vertices sit on one axis plane at 0 or
        // 1, so scan every facet of every cell geometrically
        for mesh in [
            build_square_mesh(6, 0).unwrap(),
            build_cube_mesh(4, &default_inclusions()).unwrap(),
        ] {
            let omega =
                CoefficientField::diffusion(vec![1.0; mesh.n_subdomains()]).unwrap();
            let info = analyze_subdomains(&mesh, &omega).unwrap();
            let k = mesh.dim + 1;
            let mut anchored = vec![false; mesh.n_subdomains()];
            for c in 0..mesh.n_cells() {
                for skip in 0..k {
                    let facet: Vec<usize> = (0..k)
                        .filter(|&i| i != skip)
                        .map(|i| mesh.cell(c)[i])
                        .collect();
                    let on_plane = (0..mesh.dim).any(|axis| {
                        [0.0, 1.0].iter().any(|&b| {
                            facet
                                .iter()
                                .all(|&v| (mesh.vertices[v][axis] - b).abs() < 1e-12)
                        })
                    });
                    if on_plane {
                        anchored[mesh.cell_subdomain[c]] = true;
                    }
                }
            }
            for m in 0..mesh.n_subdomains() {
                assert_eq!(info.is_floating(m), !anchored[m], "subdomain {m}");
            }
        }
    }

    #[test]
    fn a_vertex_touching_subdomain_still_floats() {
        // this assignment gives label 0 cells that reach the boundary at
        // isolated vertices without owning a whole boundary edge; floating
        // is about boundary measure, so vertex contact must not anchor it
        let mesh = build_square_mesh(4, 3835).unwrap();
        let touches_at_vertex = (0..mesh.n_cells())
            .filter(|&c| mesh.cell_subdomain[c] == 0)
            .any(|c| mesh.cell(c).iter().any(|&v| mesh.vertex_is_dirichlet[v]));
        assert!(touches_at_vertex, "seed no longer exercises vertex contact");
        let omega = CoefficientField::diffusion(vec![1.0, 1.0]).unwrap();
        let info = analyze_subdomains(&mesh, &omega).unwrap();
        assert_eq!(info.floating, vec![0]);
    }

    #[test]
    fn missing_coefficient_is_reported_with_counts() {
        let mesh = build_cube_mesh(4, &default_inclusions()).unwrap();
        let omega = CoefficientField::diffusion(vec![1.0]).unwrap();
        match analyze_subdomains(&mesh, &omega) {
            Err(Error::MissingCoefficient { have: 1, need: 2 }) => {}
            other => panic!("expected MissingCoefficient, got {other:?}"),
        }
    }
}
