//! Structured simplicial meshes of the unit square / cube with material
//! subdomain labels, uniform (red) refinement into nested hierarchies, and
//! Dirichlet boundary bookkeeping.
//!
//! Two benchmark geometries are built here:
//!
//! * [`build_cube_mesh`]: `[0,1]^3` cut into `n^3` sub-cubes, each split into
//!   six tetrahedra sharing the main diagonal (Kuhn split). Cells whose
//!   center lies inside one of the configured axis-aligned inclusion boxes
//!   form the second subdomain; by default the two boxes `[1/4,1/2]^3` and
//!   `[1/2,3/4]^3` touch at the domain center and stay away from the
//!   boundary, so the second subdomain is "floating".
//! * [`build_square_mesh`]: `[0,1]^2` cut into `n^2` squares of two triangles
//!   each, every triangle assigned to one of two subdomains by a seeded
//!   fair coin flip.
//!
//! Refinement bisects every edge: triangles split into 4 congruent children,
//! tetrahedra into 8 children (4 corner tets plus 4 tets around the shortest
//! diagonal of the interior octahedron). Vertices of the parent mesh keep
//! their indices, so the linear spaces are nested.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Coordinates this close to 0 or 1 count as lying on the boundary. Lattice
/// and midpoint coordinates hit the boundary planes exactly, so this is a
/// guard against rounding, not a geometric fudge factor.
const BOUNDARY_TOL: f64 = 1e-12;

/// Axis-aligned box used to carve inclusion subdomains out of the cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSpec {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoxSpec {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        BoxSpec { lo, hi }
    }

    fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|a| p[a] > self.lo[a] && p[a] < self.hi[a])
    }
}

/// The two interior cubes of the 3D benchmark, touching at (1/2, 1/2, 1/2).
pub fn default_inclusions() -> Vec<BoxSpec> {
    vec![
        BoxSpec::new([0.25, 0.25, 0.25], [0.5, 0.5, 0.5]),
        BoxSpec::new([0.5, 0.5, 0.5], [0.75, 0.75, 0.75]),
    ]
}

/// How a refined mesh was derived from its parent. Kept so transfer
/// operators and coarse-level bookkeeping never have to rediscover the
/// relationship geometrically.
#[derive(Debug, Clone)]
pub struct Refinement {
    /// Number of vertices inherited from the parent (they keep their indices
    /// and occupy the front of the vertex array).
    pub parent_vertex_count: usize,
    /// For each new vertex (index >= parent_vertex_count, in order): the
    /// parent-mesh edge it bisects.
    pub midpoint_edges: Vec<(usize, usize)>,
    /// For each cell: index of the parent cell it subdivides.
    pub parent_cell: Vec<usize>,
}

/// Conforming simplicial mesh of the unit square or cube.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub level: usize,
    /// Max edge length over all cells.
    pub h: f64,
    /// Vertex coordinates; 2D meshes leave the third component at 0.
    pub vertices: Vec<[f64; 3]>,
    /// Flat cell-to-vertex connectivity, `dim + 1` indices per cell,
    /// positively oriented.
    cell_vertices: Vec<usize>,
    /// Material subdomain index per cell (0-based).
    pub cell_subdomain: Vec<usize>,
    pub vertex_is_dirichlet: Vec<bool>,
    free_index: Vec<Option<usize>>,
    free_vertices: Vec<usize>,
    /// Present on every mesh produced by [`refine_uniform`].
    pub refinement: Option<Refinement>,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_subdomain.len()
    }

    pub fn verts_per_cell(&self) -> usize {
        self.dim + 1
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.verts_per_cell();
        &self.cell_vertices[c * k..(c + 1) * k]
    }

    pub fn cell_points(&self, c: usize) -> Vec<[f64; 3]> {
        self.cell(c).iter().map(|&v| self.vertices[v]).collect()
    }

    /// Highest subdomain index in use, plus one.
    pub fn n_subdomains(&self) -> usize {
        self.cell_subdomain.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Number of free (non-Dirichlet) vertices = size of the reduced system.
    pub fn n_free(&self) -> usize {
        self.free_vertices.len()
    }

    /// Position of vertex `v` in the reduced system, if it is free.
    pub fn free_index(&self, v: usize) -> Option<usize> {
        self.free_index[v]
    }

    /// Vertex index for each reduced-system slot, ascending.
    pub fn free_vertices(&self) -> &[usize] {
        &self.free_vertices
    }

    /// Scatter a reduced vector to all vertices, zero at Dirichlet vertices.
    pub fn scatter_free(&self, reduced: &[f64]) -> Vec<f64> {
        assert_eq!(reduced.len(), self.n_free());
        let mut full = vec![0.0; self.n_vertices()];
        for (slot, &v) in self.free_vertices.iter().enumerate() {
            full[v] = reduced[slot];
        }
        full
    }

    /// ASCII dump: vertex table, then cell table with a subdomain column.
    pub fn dump_ascii(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# vertices {} dim {}", self.n_vertices(), self.dim)?;
        for (v, p) in self.vertices.iter().enumerate() {
            let d = u8::from(self.vertex_is_dirichlet[v]);
            if self.dim == 2 {
                writeln!(w, "{} {} {} {}", v, p[0], p[1], d)?;
            } else {
                writeln!(w, "{} {} {} {} {}", v, p[0], p[1], p[2], d)?;
            }
        }
        writeln!(w, "# cells {}", self.n_cells())?;
        for c in 0..self.n_cells() {
            let ids: Vec<String> = self.cell(c).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{} {} {}", c, ids.join(" "), self.cell_subdomain[c])?;
        }
        Ok(())
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Signed volume of a simplex given its `dim + 1` corner points.
pub(crate) fn signed_volume(dim: usize, pts: &[[f64; 3]]) -> f64 {
    match dim {
        2 => {
            let u = sub3(pts[1], pts[0]);
            let v = sub3(pts[2], pts[0]);
            0.5 * (u[0] * v[1] - u[1] * v[0])
        }
        3 => {
            let u = sub3(pts[1], pts[0]);
            let v = sub3(pts[2], pts[0]);
            let w = sub3(pts[3], pts[0]);
            (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
                + u[2] * (v[0] * w[1] - v[1] * w[0]))
                / 6.0
        }
        _ => unreachable!("only 2D and 3D meshes exist"),
    }
}

/// Volume of cell `c` (positive: orientation is fixed at construction).
pub fn cell_volume(mesh: &Mesh, c: usize) -> f64 {
    signed_volume(mesh.dim, &mesh.cell_points(c))
}

fn on_boundary(dim: usize, p: &[f64; 3]) -> bool {
    (0..dim).any(|a| p[a] < BOUNDARY_TOL || p[a] > 1.0 - BOUNDARY_TOL)
}

/// Assemble the bookkeeping fields (orientation, Dirichlet flags, free
/// numbering, h) once the raw connectivity is in place.
fn finish_mesh(
    dim: usize,
    level: usize,
    vertices: Vec<[f64; 3]>,
    mut cell_vertices: Vec<usize>,
    cell_subdomain: Vec<usize>,
    refinement: Option<Refinement>,
) -> Mesh {
    let k = dim + 1;
    let n_cells = cell_subdomain.len();

    // Fix orientation: swapping the last two vertices flips the sign.
    for c in 0..n_cells {
        let pts: Vec<[f64; 3]> = cell_vertices[c * k..(c + 1) * k]
            .iter()
            .map(|&v| vertices[v])
            .collect();
        let vol = signed_volume(dim, &pts);
        debug_assert!(vol != 0.0, "degenerate cell {c}");
        if vol < 0.0 {
            cell_vertices.swap(c * k + (k - 2), c * k + (k - 1));
        }
    }

    let vertex_is_dirichlet: Vec<bool> = vertices.iter().map(|p| on_boundary(dim, p)).collect();
    let mut free_index = vec![None; vertices.len()];
    let mut free_vertices = Vec::new();
    for (v, &dir) in vertex_is_dirichlet.iter().enumerate() {
        if !dir {
            free_index[v] = Some(free_vertices.len());
            free_vertices.push(v);
        }
    }

    let mut h = 0.0f64;
    for c in 0..n_cells {
        let cell = &cell_vertices[c * k..(c + 1) * k];
        for a in 0..k {
            for b in (a + 1)..k {
                let e = sub3(vertices[cell[a]], vertices[cell[b]]);
                let len = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
                h = h.max(len);
            }
        }
    }

    Mesh {
        dim,
        level,
        h,
        vertices,
        cell_vertices,
        cell_subdomain,
        vertex_is_dirichlet,
        free_index,
        free_vertices,
        refinement,
    }
}

/// Unit cube cut into `cells_per_edge^3` sub-cubes of 6 tetrahedra each.
/// Cells whose center lies in any inclusion box get subdomain 1, the rest
/// subdomain 0. Box faces must lie on the cell lattice so that material
/// interfaces align with cell faces at every level.
pub fn build_cube_mesh(cells_per_edge: usize, inclusion_boxes: &[BoxSpec]) -> Result<Mesh> {
    if cells_per_edge < 2 {
        return Err(Error::MeshTooCoarse(cells_per_edge));
    }
    let n = cells_per_edge;
    let nf = n as f64;
    for b in inclusion_boxes {
        for a in 0..3 {
            let (lo, hi) = (b.lo[a], b.hi[a]);
            let aligned = |x: f64| (x * nf - (x * nf).round()).abs() < 1e-9;
            if !(0.0..1.0).contains(&lo) || !(lo..=1.0).contains(&hi) || lo >= hi
                || !aligned(lo)
                || !aligned(hi)
            {
                return Err(Error::BoxNotAligned(format!("{:?}..{:?}", b.lo, b.hi)));
            }
        }
    }

    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                vertices.push([i as f64 / nf, j as f64 / nf, k as f64 / nf]);
            }
        }
    }
    let vid = |i: usize, j: usize, k: usize| (k * np + j) * np + i;

    // The six tetrahedra of a cube trace the axis permutations of the path
    // from corner (0,0,0) to (1,1,1); all six share the main diagonal, and
    // neighboring cubes match face-to-face because every cube uses the same
    // diagonal direction.
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];

    let mut cell_vertices = Vec::with_capacity(6 * n * n * n * 4);
    let mut cell_subdomain = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let center = [
                    (i as f64 + 0.5) / nf,
                    (j as f64 + 0.5) / nf,
                    (k as f64 + 0.5) / nf,
                ];
                let sub = usize::from(inclusion_boxes.iter().any(|b| b.contains(&center)));
                for perm in PERMS {
                    let mut off = [0usize; 3];
                    let mut tet = [vid(i, j, k); 4];
                    for (step, &axis) in perm.iter().enumerate() {
                        off[axis] = 1;
                        tet[step + 1] = vid(i + off[0], j + off[1], k + off[2]);
                    }
                    cell_vertices.extend_from_slice(&tet);
                    cell_subdomain.push(sub);
                }
            }
        }
    }

    Ok(finish_mesh(3, 0, vertices, cell_vertices, cell_subdomain, None))
}

/// Unit square cut into `cells_per_edge^2` squares of two triangles each;
/// every triangle is assigned subdomain 0 or 1 by a fair coin flip from a
/// ChaCha stream seeded with `assignment_seed`, so the same seed always
/// reproduces the same material layout.
pub fn build_square_mesh(cells_per_edge: usize, assignment_seed: u64) -> Result<Mesh> {
    if cells_per_edge < 2 {
        return Err(Error::MeshTooCoarse(cells_per_edge));
    }
    let n = cells_per_edge;
    let nf = n as f64;
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push([i as f64 / nf, j as f64 / nf, 0.0]);
        }
    }
    let vid = |i: usize, j: usize| j * np + i;

    let mut rng = ChaCha8Rng::seed_from_u64(assignment_seed);
    let mut cell_vertices = Vec::with_capacity(2 * n * n * 3);
    let mut cell_subdomain = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            // Both triangles use the same diagonal direction so refinement
            // stays similar to the 3D Kuhn pattern.
            let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            for tri in [[v00, v10, v11], [v00, v11, v01]] {
                cell_vertices.extend_from_slice(&tri);
                cell_subdomain.push(usize::from(rng.gen_bool(0.5)));
            }
        }
    }

    Ok(finish_mesh(2, 0, vertices, cell_vertices, cell_subdomain, None))
}

/// Bisect every edge. Triangles split into 4 congruent children; tetrahedra
/// into 8 (4 corner tets plus 4 around the shortest interior diagonal of the
/// midpoint octahedron, ties broken in a fixed order). Children inherit the
/// parent's subdomain; parent vertices keep their indices.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint_edges = Vec::new();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = midpoints.get(&key) {
            return m;
        }
        let pa = vertices[a];
        let pb = vertices[b];
        let m = vertices.len();
        vertices.push([
            0.5 * (pa[0] + pb[0]),
            0.5 * (pa[1] + pb[1]),
            0.5 * (pa[2] + pb[2]),
        ]);
        midpoints.insert(key, m);
        midpoint_edges.push(key);
        m
    };

    let mut cell_vertices = Vec::new();
    let mut cell_subdomain = Vec::new();
    let mut parent_cell = Vec::new();
    let push = |tet: &[usize], sub: usize, parent: usize, cv: &mut Vec<usize>, cs: &mut Vec<usize>, pc: &mut Vec<usize>| {
        cv.extend_from_slice(tet);
        cs.push(sub);
        pc.push(parent);
    };

    for c in 0..mesh.n_cells() {
        let sub = mesh.cell_subdomain[c];
        match mesh.dim {
            2 => {
                let [a, b, d] = [mesh.cell(c)[0], mesh.cell(c)[1], mesh.cell(c)[2]];
                let mab = midpoint(a, b, &mut vertices);
                let mbd = midpoint(b, d, &mut vertices);
                let mad = midpoint(a, d, &mut vertices);
                for tri in [
                    [a, mab, mad],
                    [mab, b, mbd],
                    [mad, mbd, d],
                    [mab, mbd, mad],
                ] {
                    push(&tri, sub, c, &mut cell_vertices, &mut cell_subdomain, &mut parent_cell);
                }
            }
            3 => {
                let v: [usize; 4] = mesh.cell(c).try_into().unwrap();
                let m01 = midpoint(v[0], v[1], &mut vertices);
                let m02 = midpoint(v[0], v[2], &mut vertices);
                let m03 = midpoint(v[0], v[3], &mut vertices);
                let m12 = midpoint(v[1], v[2], &mut vertices);
                let m13 = midpoint(v[1], v[3], &mut vertices);
                let m23 = midpoint(v[2], v[3], &mut vertices);

                for tet in [
                    [v[0], m01, m02, m03],
                    [m01, v[1], m12, m13],
                    [m02, m12, v[2], m23],
                    [m03, m13, m23, v[3]],
                ] {
                    push(&tet, sub, c, &mut cell_vertices, &mut cell_subdomain, &mut parent_cell);
                }

                // Interior octahedron: three candidate diagonals, each with
                // its equatorial ring of the remaining four midpoints.
                let dist2 = |p: usize, q: usize| {
                    let e = sub3(vertices[p], vertices[q]);
                    e[0] * e[0] + e[1] * e[1] + e[2] * e[2]
                };
                let candidates = [
                    ((m01, m23), [m02, m03, m13, m12]),
                    ((m02, m13), [m01, m03, m23, m12]),
                    ((m03, m12), [m01, m02, m23, m13]),
                ];
                let mut best = 0;
                for i in 1..3 {
                    if dist2(candidates[i].0 .0, candidates[i].0 .1)
                        < dist2(candidates[best].0 .0, candidates[best].0 .1)
                    {
                        best = i;
                    }
                }
                let ((d0, d1), ring) = candidates[best];
                for t in 0..4 {
                    let tet = [d0, d1, ring[t], ring[(t + 1) % 4]];
                    push(&tet, sub, c, &mut cell_vertices, &mut cell_subdomain, &mut parent_cell);
                }
            }
            _ => unreachable!(),
        }
    }

    let refinement = Refinement {
        parent_vertex_count: mesh.n_vertices(),
        midpoint_edges,
        parent_cell,
    };
    finish_mesh(
        mesh.dim,
        mesh.level + 1,
        vertices,
        cell_vertices,
        cell_subdomain,
        Some(refinement),
    )
}

/// Nested mesh family `level 0 (coarse) ..= L (finest)`, refinement ratio 1/2.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    pub meshes: Vec<Mesh>,
    /// h_k / h_{k-1}, always 1/2 under uniform bisection.
    pub gamma: f64,
}

impl MeshHierarchy {
    pub fn top_level(&self) -> usize {
        self.meshes.len() - 1
    }

    pub fn coarsest(&self) -> &Mesh {
        &self.meshes[0]
    }

    pub fn finest(&self) -> &Mesh {
        self.meshes.last().unwrap()
    }

    pub fn level(&self, k: usize) -> Result<&Mesh> {
        self.meshes.get(k).ok_or(Error::LevelOutOfRange {
            k,
            top: self.top_level(),
        })
    }

    /// For every finest-level cell, the index of its ancestor cell at level
    /// `k` (identity when k = L).
    pub fn ancestor_cells(&self, k: usize) -> Result<Vec<usize>> {
        self.level(k)?;
        let l = self.top_level();
        let mut map: Vec<usize> = (0..self.finest().n_cells()).collect();
        for lv in ((k + 1)..=l).rev() {
            let parents = &self.meshes[lv].refinement.as_ref().unwrap().parent_cell;
            for m in map.iter_mut() {
                *m = parents[*m];
            }
        }
        Ok(map)
    }
}

/// Nodal interpolation of a coarse function onto the next finer mesh:
/// inherited vertices copy their value, midpoints average the two edge
/// endpoints. For nested linear elements this is exact.
pub fn interpolate_nodal(fine: &Mesh, coarse_values: &[f64]) -> Vec<f64> {
    let refinement = fine
        .refinement
        .as_ref()
        .expect("refined meshes carry provenance");
    assert_eq!(coarse_values.len(), refinement.parent_vertex_count);
    let mut out = Vec::with_capacity(fine.n_vertices());
    out.extend_from_slice(coarse_values);
    for &(a, b) in &refinement.midpoint_edges {
        out.push(0.5 * (coarse_values[a] + coarse_values[b]));
    }
    out
}

impl MeshHierarchy {
    /// Interpolate level-`k` nodal values all the way to the finest mesh.
    pub fn embed_nodal(&self, k: usize, values: &[f64]) -> Result<Vec<f64>> {
        let mesh = self.level(k)?;
        if values.len() != mesh.n_vertices() {
            return Err(Error::ShapeMismatch(format!(
                "{} nodal values for a mesh with {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        let mut v = values.to_vec();
        for lv in (k + 1)..=self.top_level() {
            v = interpolate_nodal(&self.meshes[lv], &v);
        }
        Ok(v)
    }
}

/// Refine `coarse` L times; the result holds L+1 nested meshes.
pub fn build_hierarchy(coarse: Mesh, l: usize) -> MeshHierarchy {
    let mut meshes = Vec::with_capacity(l + 1);
    meshes.push(coarse);
    for _ in 0..l {
        let next = refine_uniform(meshes.last().unwrap());
        meshes.push(next);
    }
    MeshHierarchy { meshes, gamma: 0.5 }
}

/// Faces ((d-1)-simplices, as sorted vertex tuples) that belong to exactly
/// one cell, together with that cell. This is the topological boundary;
/// used both for floating-subdomain detection and as an independent oracle
/// for the geometric Dirichlet flags.
pub fn boundary_cell_faces(mesh: &Mesh) -> Vec<(Vec<usize>, usize)> {
    let mut counts: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
    let k = mesh.verts_per_cell();
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        for skip in 0..k {
            let mut face: Vec<usize> = (0..k).filter(|&i| i != skip).map(|i| cell[i]).collect();
            face.sort_unstable();
            let e = counts.entry(face).or_insert((0, c));
            e.0 += 1;
            e.1 = e.1.min(c);
        }
    }
    let mut out: Vec<(Vec<usize>, usize)> = counts
        .into_iter()
        .filter(|(_, (n, _))| *n == 1)
        .map(|(f, (_, c))| (f, c))
        .collect();
    out.sort();
    out
}

/// Vertices lying on some boundary face (topological definition).
pub fn topological_boundary_mask(mesh: &Mesh) -> Vec<bool> {
    let mut mask = vec![false; mesh.n_vertices()];
    for (face, _) in boundary_cell_faces(mesh) {
        for v in face {
            mask[v] = true;
        }
    }
    mask
}
