//! Layered tetrahedral wall mesh, linear elastic stress recovery and wall
//! tension.
//!
//! Positions are in mm at the interfaces and converted to metres for the
//! element computations, so stresses come out in Pa, nodal forces in N and
//! tension in N/m.

use std::collections::BTreeSet;

use log::debug;
use nalgebra::{Matrix2, Matrix3, SMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TriangleSurface;
use crate::numeric::{compensated_sum, Vec3};

const MM: f64 = 1e-3;

/// Half-angle of the fixed polar caps on closed surfaces, degrees.
pub const POLAR_CAP_DEGREES: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Wall,
    Ilt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// Pa.
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
}

impl Material {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64) -> Result<Self> {
        let m = Self {
            youngs_modulus,
            poisson_ratio,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0) || !self.youngs_modulus.is_finite() {
            return Err(Error::InvalidParameter(format!("Young's modulus {} must be > 0", self.youngs_modulus)));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::InvalidParameter(format!("Poisson ratio {} outside [0, 0.5)", self.poisson_ratio)));
        }
        Ok(())
    }

    /// Isotropic stiffness in Voigt order (xx, yy, zz, yz, xz, xy) with
    /// engineering shear strains.
    fn stiffness(&self) -> SMatrix<f64, 6, 6> {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        let mut c = SMatrix::<f64, 6, 6>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                c[(i, j)] = lambda;
            }
            c[(i, i)] += 2.0 * mu;
            c[(i + 3, i + 3)] = mu;
        }
        c
    }
}

/// Wall material plus the optional thrombus material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Materials {
    pub wall: Material,
    pub ilt: Material,
}

impl Default for Materials {
    fn default() -> Self {
        let wall = Material {
            youngs_modulus: 100e9,
            poisson_ratio: 0.3,
        };
        Self {
            wall,
            ilt: Material {
                youngs_modulus: wall.youngs_modulus / 20.0,
                ..wall
            },
        }
    }
}

impl Materials {
    pub fn get(&self, region: Region) -> &Material {
        match region {
            Region::Wall => &self.wall,
            Region::Ilt => &self.ilt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.wall.validate()?;
        self.ilt.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallMesh {
    /// mm.
    pub nodes: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    /// Per surface vertex, node ids from the inner skin to the surface.
    pub node_columns: Vec<Vec<usize>>,
    /// Lumen-side triangles, normals pointing into the lumen.
    pub inner_faces: Vec<[usize; 3]>,
    pub fixed_nodes: Vec<usize>,
    pub region_of_tet: Vec<Region>,
    /// Surface triangle whose prism stack holds each tet.
    pub tet_triangle: Vec<usize>,
    pub layers: usize,
    /// mm.
    pub thickness: f64,
}

impl WallMesh {
    pub fn node(&self, i: usize) -> Vec3 {
        Vec3::from(self.nodes[i])
    }

    /// Signed volume in mm^3.
    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.nodes, &self.tets[t])
    }

    pub fn total_volume(&self) -> f64 {
        compensated_sum((0..self.tets.len()).map(|t| self.tet_volume(t)))
    }

    /// Marks the innermost `layers` element layers as thrombus.
    pub fn mark_ilt_layers(&mut self, layers: usize) {
        let per_layer = self.tets.len() / self.layers;
        for (t, region) in self.region_of_tet.iter_mut().enumerate() {
            if t / per_layer < layers {
                *region = Region::Ilt;
            }
        }
    }

    /// Checks that every interior face is shared by exactly two tets and
    /// boundary faces by one.
    pub fn is_conforming(&self) -> bool {
        let mut faces = std::collections::HashMap::new();
        for t in &self.tets {
            for skip in 0..4 {
                let mut f: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| t[i]).collect();
                f.sort_unstable();
                *faces.entry([f[0], f[1], f[2]]).or_insert(0usize) += 1;
            }
        }
        faces.values().all(|&n| n <= 2)
    }
}

fn signed_volume(nodes: &[[f64; 3]], t: &[usize; 4]) -> f64 {
    let p = |i: usize| Vec3::from(nodes[t[i]]);
    (p(1) - p(0)).cross(&(p(2) - p(0))).dot(&(p(3) - p(0))) / 6.0
}

/// Offsets the surface inward along its frame normals into `layers` skins
/// and fills each prism between consecutive skins with three tets.
pub fn build_wall_mesh(surface: &TriangleSurface, thickness: f64, layers: usize) -> Result<WallMesh> {
    if layers < 2 {
        return Err(Error::InvalidParameter(format!("layers {layers} must be >= 2")));
    }
    if !(thickness > 0.0) {
        return Err(Error::InvalidParameter("wall thickness must be > 0".into()));
    }
    let frames = surface
        .frames
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("surface frames are not populated".into()))?;
    let nv = surface.vertex_count();
    let mut nodes = Vec::with_capacity(nv * (layers + 1));
    for layer in 0..=layers {
        let depth = thickness * (layers - layer) as f64 / layers as f64;
        for (v, f) in frames.iter().enumerate() {
            let p = surface.vertex(v) - f.n() * depth;
            nodes.push([p.x, p.y, p.z]);
        }
    }
    let id = |layer: usize, v: usize| layer * nv + v;

    let mut tets = Vec::with_capacity(3 * layers * surface.triangles.len());
    let mut tet_triangle = Vec::with_capacity(tets.capacity());
    for layer in 0..layers {
        for (ti, tri) in surface.triangles.iter().enumerate() {
            let mut s = *tri;
            s.sort_unstable();
            let odd = is_odd_permutation(tri, &s);
            let [v0, v1, v2] = s;
            let (b, t) = (|v| id(layer, v), |v| id(layer + 1, v));
            for mut tet in [
                [b(v0), b(v1), b(v2), t(v2)],
                [b(v0), t(v1), b(v1), t(v2)],
                [b(v0), t(v0), t(v1), t(v2)],
            ] {
                if odd {
                    tet.swap(0, 1);
                }
                tets.push(tet);
                tet_triangle.push(ti);
            }
        }
    }
    let mut inverted = BTreeSet::new();
    for (k, t) in tets.iter().enumerate() {
        if !(signed_volume(&nodes, t) > 0.0) {
            inverted.extend(surface.triangles[tet_triangle[k]]);
        }
    }
    if !inverted.is_empty() {
        return Err(Error::InvertedElements {
            vertices: inverted.into_iter().collect(),
        });
    }

    let node_columns = (0..nv).map(|v| (0..=layers).map(|l| id(l, v)).collect()).collect();
    let inner_faces = surface.triangles.iter().map(|t| [id(0, t[0]), id(0, t[2]), id(0, t[1])]).collect();
    let fixed_vertices = fixed_surface_vertices(surface);
    let fixed_nodes = (0..=layers).flat_map(|l| fixed_vertices.iter().map(move |&v| id(l, v))).collect();
    Ok(WallMesh {
        region_of_tet: vec![Region::Wall; tets.len()],
        nodes,
        tets,
        node_columns,
        inner_faces,
        fixed_nodes,
        tet_triangle,
        layers,
        thickness,
    })
}

fn is_odd_permutation(original: &[usize; 3], sorted: &[usize; 3]) -> bool {
    // a cyclic shift of the sorted triple is even
    let start = original.iter().position(|&v| v == sorted[0]).unwrap();
    original[(start + 1) % 3] != sorted[1]
}

/// End-ring vertices for open surfaces; polar caps around the z axis
/// through the centroid for closed ones.
pub fn fixed_surface_vertices(surface: &TriangleSurface) -> Vec<usize> {
    if !surface.is_closed() {
        let mut v: Vec<usize> = surface.end_rings.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        return v;
    }
    let c = surface.centroid();
    let cos_cap = POLAR_CAP_DEGREES.to_radians().cos();
    (0..surface.vertex_count())
        .filter(|&v| {
            let d = surface.vertex(v) - c;
            let len = d.norm();
            len > 0.0 && (d.z / len).abs() >= cos_cap
        })
        .collect()
}

/// Per-tet stress tensors, Voigt order (xx, yy, zz, yz, xz, xy), Pa.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub tet: Vec<[f64; 6]>,
    /// Column-averaged tensor per surface vertex, once
    /// [`uniform_stress_average`] has run.
    pub column: Option<Vec<[f64; 6]>>,
}

pub fn voigt_to_matrix(s: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(s[0], s[5], s[4], s[5], s[1], s[3], s[4], s[3], s[2])
}

#[derive(Debug, Clone)]
pub struct ElasticSolution {
    /// mm.
    pub displacements: Vec<[f64; 3]>,
    pub stress: StressField,
    /// Reaction force at each fixed node, N (zero elsewhere).
    pub reactions: Vec<[f64; 3]>,
    /// Applied nodal loads, N.
    pub loads: Vec<[f64; 3]>,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl ElasticSolution {
    /// `|sum(reactions) + sum(loads)|` relative to the summed load
    /// magnitudes.
    pub fn equilibrium_error(&self) -> f64 {
        let mut total = [0.0; 3];
        for c in 0..3 {
            total[c] = compensated_sum(self.reactions.iter().chain(&self.loads).map(|f| f[c]));
        }
        let scale = compensated_sum(self.loads.iter().map(|f| Vec3::from(*f).norm()));
        if scale == 0.0 {
            return 0.0;
        }
        Vec3::from(total).norm() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Sparse Cholesky factorization.
    Direct,
    /// Block-Jacobi preconditioned conjugate gradients.
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub method: LinearSolver,
    /// Relative residual bound.
    pub tolerance: f64,
    /// Conjugate-gradient iteration cap.
    pub max_iterations: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            method: LinearSolver::Direct,
            tolerance: 1e-9,
            max_iterations: 20_000,
        }
    }
}

/// Nodal pressure loads: each inner face pushes on its three nodes along
/// the solid's inward-facing direction (away from the lumen).
pub fn pressure_loads(mesh: &WallMesh, pressure: f64) -> Vec<[f64; 3]> {
    let mut f = vec![[0.0; 3]; mesh.nodes.len()];
    for face in &mesh.inner_faces {
        let (a, b, c) = (mesh.node(face[0]), mesh.node(face[1]), mesh.node(face[2]));
        // normal points into the lumen; area vector in m^2
        let area = (b - a).cross(&(c - a)) * (0.5 * MM * MM);
        let share = -area * (pressure / 3.0);
        for &n in face {
            for k in 0..3 {
                f[n][k] += share[k];
            }
        }
    }
    f
}

/// Shape-function gradients (1/m) and volume (m^3) of a tet.
fn tet_gradients(mesh: &WallMesh, t: usize) -> ([Vec3; 4], f64) {
    let tet = &mesh.tets[t];
    let p: Vec<Vec3> = tet.iter().map(|&i| mesh.node(i) * MM).collect();
    let j = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let vol = j.determinant() / 6.0;
    let inv_t = j.try_inverse().expect("positive-volume tet").transpose();
    let g1: Vec3 = inv_t.column(0).into_owned();
    let g2: Vec3 = inv_t.column(1).into_owned();
    let g3: Vec3 = inv_t.column(2).into_owned();
    ([-(g1 + g2 + g3), g1, g2, g3], vol)
}

/// Strain-displacement matrix for nodal displacements ordered
/// (node0 xyz, node1 xyz, ...).
fn b_matrix(grads: &[Vec3; 4]) -> SMatrix<f64, 6, 12> {
    let mut b = SMatrix::<f64, 6, 12>::zeros();
    for (a, g) in grads.iter().enumerate() {
        let c = 3 * a;
        b[(0, c)] = g.x;
        b[(1, c + 1)] = g.y;
        b[(2, c + 2)] = g.z;
        b[(3, c + 1)] = g.z;
        b[(3, c + 2)] = g.y;
        b[(4, c)] = g.z;
        b[(4, c + 2)] = g.x;
        b[(5, c)] = g.y;
        b[(5, c + 1)] = g.x;
    }
    b
}

/// Symmetric block-sparse matrix with 3x3 blocks on the node graph.
struct BlockMatrix {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<[f64; 9]>,
}

impl BlockMatrix {
    fn pattern(n: usize, tets: &[[usize; 4]]) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in tets {
            for &a in t {
                adj[a].extend_from_slice(t);
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_start.push(0);
        for row in adj.iter_mut() {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_start.push(cols.len());
        }
        let blocks = vec![[0.0; 9]; cols.len()];
        Self { row_start, cols, blocks }
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        let range = self.row_start[row]..self.row_start[row + 1];
        self.row_start[row] + self.cols[range].binary_search(&col).expect("column in pattern")
    }

    fn multiply(&self, x: &[f64], y: &mut [f64]) {
        for row in 0..self.row_start.len() - 1 {
            let mut acc = [0.0; 3];
            for k in self.row_start[row]..self.row_start[row + 1] {
                let b = &self.blocks[k];
                let c = 3 * self.cols[k];
                let (x0, x1, x2) = (x[c], x[c + 1], x[c + 2]);
                acc[0] += b[0] * x0 + b[1] * x1 + b[2] * x2;
                acc[1] += b[3] * x0 + b[4] * x1 + b[5] * x2;
                acc[2] += b[6] * x0 + b[7] * x1 + b[8] * x2;
            }
            y[3 * row..3 * row + 3].copy_from_slice(&acc);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::numeric::dot(a, b)
}

/// Linear elastic response of the wall mesh to lumen pressure `pressure`
/// (Pa) with the fixed nodes clamped.
pub fn solve_elasticity(mesh: &WallMesh, pressure: f64, materials: &Materials) -> Result<ElasticSolution> {
    solve_elasticity_with(mesh, pressure, materials, &SolverParams::default())
}

pub fn solve_elasticity_with(mesh: &WallMesh, pressure: f64, materials: &Materials, params: &SolverParams) -> Result<ElasticSolution> {
    materials.validate()?;
    if mesh.fixed_nodes.is_empty() {
        return Err(Error::Singular("no fixed nodes".into()));
    }
    if !(pressure >= 0.0) || !pressure.is_finite() {
        return Err(Error::InvalidParameter(format!("pressure {pressure} must be >= 0")));
    }
    let n = mesh.nodes.len();
    let mut k = BlockMatrix::pattern(n, &mesh.tets);
    let stiffness = [materials.wall.stiffness(), materials.ilt.stiffness()];
    let mut element_b = Vec::with_capacity(mesh.tets.len());
    for (t, tet) in mesh.tets.iter().enumerate() {
        let (grads, vol) = tet_gradients(mesh, t);
        if !(vol > 0.0) {
            return Err(Error::InvertedElements {
                vertices: tet.to_vec(),
            });
        }
        let b = b_matrix(&grads);
        let c = &stiffness[(mesh.region_of_tet[t] == Region::Ilt) as usize];
        let ke = b.transpose() * c * b * vol;
        for (i, &a) in tet.iter().enumerate() {
            for (j, &bn) in tet.iter().enumerate() {
                let s = k.slot(a, bn);
                let blk = &mut k.blocks[s];
                for r in 0..3 {
                    for q in 0..3 {
                        blk[3 * r + q] += ke[(3 * i + r, 3 * j + q)];
                    }
                }
            }
        }
        element_b.push((b, vol));
    }

    let loads = pressure_loads(mesh, pressure);
    let mut fixed = vec![false; n];
    mesh.fixed_nodes.iter().for_each(|&i| fixed[i] = true);
    let mask = |v: &mut [f64]| {
        for (i, f) in fixed.iter().enumerate() {
            if *f {
                v[3 * i..3 * i + 3].fill(0.0);
            }
        }
    };
    let mut rhs: Vec<f64> = loads.iter().flatten().copied().collect();
    mask(&mut rhs);

    let (u, iterations, relative_residual) = match params.method {
        LinearSolver::Direct => cholesky_solve(&k, &rhs, &fixed, params.tolerance)?,
        LinearSolver::Cg => {
            let precond = block_jacobi(&k, &fixed)?;
            pcg(&k, &rhs, &precond, &fixed, params)?
        }
    };

    let mut ku = vec![0.0; 3 * n];
    k.multiply(&u, &mut ku);
    let reactions = (0..n)
        .map(|i| {
            if fixed[i] {
                [0, 1, 2].map(|c| ku[3 * i + c] - loads[i][c])
            } else {
                [0.0; 3]
            }
        })
        .collect();

    let stress = mesh
        .tets
        .iter()
        .enumerate()
        .map(|(t, tet)| {
            let (b, _) = &element_b[t];
            let mut ue = SMatrix::<f64, 12, 1>::zeros();
            for (a, &node) in tet.iter().enumerate() {
                for c in 0..3 {
                    ue[3 * a + c] = u[3 * node + c];
                }
            }
            let c = &stiffness[(mesh.region_of_tet[t] == Region::Ilt) as usize];
            let s = c * (b * ue);
            [s[0], s[1], s[2], s[3], s[4], s[5]]
        })
        .collect();

    Ok(ElasticSolution {
        displacements: (0..n).map(|i| [0, 1, 2].map(|c| u[3 * i + c] / MM)).collect(),
        stress: StressField { tet: stress, column: None },
        reactions,
        loads,
        iterations,
        relative_residual,
    })
}

/// Solves the free-DOF system by sparse Cholesky, followed by residual
/// refinement steps until the relative residual meets `tolerance`.
fn cholesky_solve(k: &BlockMatrix, b: &[f64], fixed: &[bool], tolerance: f64) -> Result<(Vec<f64>, usize, f64)> {
    use faer::linalg::solvers::Solve;
    use faer::sparse::{SparseColMat, Triplet};

    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0, 0.0));
    }
    // free dof -> reduced index
    let mut reduced = vec![usize::MAX; n];
    let mut free = Vec::new();
    for (node, f) in fixed.iter().enumerate() {
        if !f {
            for c in 0..3 {
                reduced[3 * node + c] = free.len();
                free.push(3 * node + c);
            }
        }
    }
    let mut triplets = Vec::new();
    for row in 0..fixed.len() {
        if fixed[row] {
            continue;
        }
        for slot in k.row_start[row]..k.row_start[row + 1] {
            let col = k.cols[slot];
            if fixed[col] || col > row {
                continue;
            }
            let blk = &k.blocks[slot];
            for r in 0..3 {
                for c in 0..3 {
                    let (i, j) = (reduced[3 * row + r], reduced[3 * col + c]);
                    if i >= j {
                        triplets.push(Triplet::new(i, j, blk[3 * r + c]));
                    }
                }
            }
        }
    }
    let m = free.len();
    let matrix = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &triplets)
        .map_err(|e| Error::Singular(format!("stiffness assembly: {e:?}")))?;
    let llt = matrix
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::Singular(format!("stiffness not positive definite: {e:?}")))?;

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut ax = vec![0.0; n];
    let mut rel = 1.0;
    for step in 1..=4 {
        let mut rhs = faer::Mat::<f64>::from_fn(m, 1, |i, _| r[free[i]]);
        llt.solve_in_place(rhs.as_mut());
        for (i, &dof) in free.iter().enumerate() {
            x[dof] += rhs[(i, 0)];
        }
        k.multiply(&x, &mut ax);
        for &dof in &free {
            r[dof] = b[dof] - ax[dof];
        }
        rel = free.iter().map(|&d| r[d] * r[d]).sum::<f64>().sqrt() / bnorm;
        if !rel.is_finite() {
            return Err(Error::Singular("non-finite solution".into()));
        }
        if rel <= tolerance {
            debug!("cholesky solve residual {rel:e} after {step} step(s)");
            return Ok((x, step, rel));
        }
    }
    Err(Error::NotConverged {
        iterations: 4,
        residual: rel,
    })
}

fn block_jacobi(k: &BlockMatrix, fixed: &[bool]) -> Result<Vec<Matrix3<f64>>> {
    (0..fixed.len())
        .map(|i| {
            if fixed[i] {
                return Ok(Matrix3::identity());
            }
            let b = &k.blocks[k.slot(i, i)];
            Matrix3::from_row_slice(b)
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("zero stiffness at node {i}")))
        })
        .collect()
}

fn pcg(k: &BlockMatrix, b: &[f64], precond: &[Matrix3<f64>], fixed: &[bool], params: &SolverParams) -> Result<(Vec<f64>, usize, f64)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        k.multiply(v, out);
        for (i, f) in fixed.iter().enumerate() {
            if *f {
                out[3 * i..3 * i + 3].copy_from_slice(&v[3 * i..3 * i + 3]);
            }
        }
    };
    let precondition = |r: &[f64], z: &mut [f64]| {
        for (i, m) in precond.iter().enumerate() {
            let v = m * nalgebra::Vector3::new(r[3 * i], r[3 * i + 1], r[3 * i + 2]);
            z[3 * i..3 * i + 3].copy_from_slice(v.as_slice());
        }
    };
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=params.max_iterations {
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::Singular(format!("stiffness not positive definite (p.Kp = {pq:e})")));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= params.tolerance {
            debug!("pcg converged in {it} iterations, residual {rel:e}");
            return Ok((x, it, rel));
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: params.max_iterations,
        residual: dot(&r, &r).sqrt() / bnorm,
    })
}

/// Replaces the through-thickness stress variation by its volume-weighted
/// mean: each surface vertex gets the mean over the prism stacks of its
/// incident triangles, and each tet gets the mean of its own stack.
pub fn uniform_stress_average(mesh: &WallMesh, stresses: &StressField) -> Result<StressField> {
    if stresses.tet.len() != mesh.tets.len() || mesh.tet_triangle.len() != mesh.tets.len() {
        return Err(Error::FieldMismatch(format!(
            "{} stresses for {} tets",
            stresses.tet.len(),
            mesh.tets.len()
        )));
    }
    let ntri = mesh.tet_triangle.iter().copied().max().map_or(0, |m| m + 1);
    let mut stack_sum = vec![[0.0; 6]; ntri];
    let mut stack_vol = vec![0.0; ntri];
    let mut stack_tri = vec![[usize::MAX; 3]; ntri];
    let nv = mesh.node_columns.len();
    for (t, s) in stresses.tet.iter().enumerate() {
        let tri = mesh.tet_triangle[t];
        let v = mesh.tet_volume(t);
        stack_vol[tri] += v;
        for c in 0..6 {
            stack_sum[tri][c] += v * s[c];
        }
        if stack_tri[tri][0] == usize::MAX {
            // surface vertex ids of the prism, from its node ids
            let mut verts: Vec<usize> = mesh.tets[t].iter().map(|&n| n % nv).collect();
            verts.sort_unstable();
            verts.dedup();
            if verts.len() == 3 {
                stack_tri[tri] = [verts[0], verts[1], verts[2]];
            }
        }
    }
    let mut col_sum = vec![[0.0; 6]; nv];
    let mut col_vol = vec![0.0; nv];
    for tri in 0..ntri {
        if stack_tri[tri][0] == usize::MAX {
            return Err(Error::FieldMismatch(format!("prism stack {tri} has no column mapping")));
        }
        for &v in &stack_tri[tri] {
            col_vol[v] += stack_vol[tri];
            for c in 0..6 {
                col_sum[v][c] += stack_sum[tri][c];
            }
        }
    }
    let mean = |sum: &[f64; 6], vol: f64| sum.map(|x| if vol > 0.0 { x / vol } else { 0.0 });
    if let Some(v) = col_vol.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::FieldMismatch(format!("surface vertex {v} has no incident prisms")));
    }
    Ok(StressField {
        tet: mesh.tet_triangle.iter().map(|&tri| mean(&stack_sum[tri], stack_vol[tri])).collect(),
        column: Some((0..nv).map(|v| mean(&col_sum[v], col_vol[v])).collect()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    #[serde(rename = "N/m")]
    NewtonPerMeter,
    #[serde(rename = "1")]
    Dimensionless,
    #[serde(rename = "m/N")]
    MeterPerNewton,
    #[serde(rename = "mm")]
    Millimeter,
}

impl Units {
    pub fn as_str(&self) -> &'static str {
        match self {
            Units::NewtonPerMeter => "N/m",
            Units::Dimensionless => "1",
            Units::MeterPerNewton => "m/N",
            Units::Millimeter => "mm",
        }
    }
}

/// Named per-vertex scalar field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceField {
    pub name: String,
    pub units: Units,
    pub values: Vec<f64>,
}

impl SurfaceField {
    pub fn new(name: &str, units: Units, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::FieldMismatch(format!("field {name} has a non-finite value at vertex {i}")));
        }
        Ok(Self {
            name: name.to_string(),
            units,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensionFields {
    /// Largest in-plane principal resultant.
    pub max_principal: SurfaceField,
    /// Resultant along `axis x normal` (falls back to tangent1 where the
    /// normal is parallel to the axis).
    pub circumferential: SurfaceField,
}

/// In-plane stress resultant per vertex: the column stress projected on the
/// tangent plane, times the wall thickness.
pub fn wall_tension(mesh: &WallMesh, averaged: &StressField, surface: &TriangleSurface, axis: Option<[f64; 3]>) -> Result<TensionFields> {
    let columns = averaged
        .column
        .as_ref()
        .ok_or_else(|| Error::FieldMismatch("stress field has no column averages".into()))?;
    let frames = surface
        .frames
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("surface frames are not populated".into()))?;
    if columns.len() != surface.vertex_count() {
        return Err(Error::FieldMismatch(format!(
            "{} columns for {} vertices",
            columns.len(),
            surface.vertex_count()
        )));
    }
    let axis = Vec3::from(axis.unwrap_or([0.0, 0.0, 1.0])).normalize();
    let h = mesh.thickness * MM;
    let mut tmax = Vec::with_capacity(columns.len());
    let mut tcirc = Vec::with_capacity(columns.len());
    for (s, f) in columns.iter().zip(frames) {
        let sigma = voigt_to_matrix(s);
        let (t1, t2, n) = (f.t1(), f.t2(), f.n());
        let proj = |a: &Vec3, b: &Vec3| a.dot(&(sigma * b));
        let a12 = 0.5 * (proj(&t1, &t2) + proj(&t2, &t1));
        let t = Matrix2::new(proj(&t1, &t1), a12, a12, proj(&t2, &t2)) * h;
        let eig = SymmetricEigen::new(t);
        tmax.push(eig.eigenvalues.max());
        let circ = axis.cross(&n);
        let e = if circ.norm() > 1e-6 { circ.normalize() } else { t1 };
        tcirc.push(h * proj(&e, &e));
    }
    Ok(TensionFields {
        max_principal: SurfaceField::new("tension_max_principal", Units::NewtonPerMeter, tmax)?,
        circumferential: SurfaceField::new("tension_circumferential", Units::NewtonPerMeter, tcirc)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LocalFrame;

    /// Flat strip in the xy plane, normals +z, open along x.
    fn strip(nx: usize, ny: usize) -> TriangleSurface {
        let mut vertices = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                vertices.push([i as f64, j as f64, 0.0]);
            }
        }
        let mut triangles = Vec::new();
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let a = j * nx + i;
                triangles.push([a, a + 1, a + nx + 1]);
                triangles.push([a + nx + 1, a + nx, a]);
            }
        }
        let mut s = TriangleSurface::new(vertices, triangles).unwrap();
        s.frames = Some(vec![LocalFrame::from_normal(Vec3::z(), Vec3::x()).unwrap(); nx * ny]);
        s
    }

    #[test]
    fn mesh_counts_and_volume() {
        let s = strip(4, 3);
        let m = build_wall_mesh(&s, 1.5, 3).unwrap();
        assert_eq!(m.nodes.len(), 4 * s.vertex_count());
        assert_eq!(m.tets.len(), 9 * s.triangles.len());
        assert!((0..m.tets.len()).all(|t| m.tet_volume(t) > 0.0));
        assert!((m.total_volume() - 3.0 * 2.0 * 1.5).abs() < 1e-12);
        assert!(m.is_conforming());
        assert_eq!(m.node_columns[5], vec![5, 17, 29, 41]);
    }

    #[test]
    fn permutation_parity() {
        assert!(!is_odd_permutation(&[2, 0, 1], &[0, 1, 2]));
        assert!(is_odd_permutation(&[1, 0, 2], &[0, 1, 2]));
    }

    #[test]
    fn zero_pressure_gives_zero_response() {
        let mut s = strip(5, 3);
        s.end_rings = vec![(0..5).collect()];
        let m = build_wall_mesh(&s, 1.0, 2).unwrap();
        let sol = solve_elasticity(&m, 0.0, &Materials::default()).unwrap();
        assert!(sol.displacements.iter().flatten().all(|&u| u == 0.0));
        assert!(sol.stress.tet.iter().flatten().all(|&s| s == 0.0));
    }

    #[test]
    fn uniform_stress_is_a_fixed_point() {
        let s = strip(4, 4);
        let m = build_wall_mesh(&s, 1.0, 2).unwrap();
        let field = StressField {
            tet: vec![[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; m.tets.len()],
            column: None,
        };
        let avg = uniform_stress_average(&m, &field).unwrap();
        for c in avg.column.unwrap() {
            for (a, b) in c.iter().zip([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_layer_average() {
        let s = strip(3, 3);
        let m = build_wall_mesh(&s, 2.0, 2).unwrap();
        let per_layer = m.tets.len() / 2;
        let tet = (0..m.tets.len())
            .map(|t| {
                let v = if t < per_layer { 1.0 } else { 3.0 };
                [v, v, 0.0, 0.0, 0.0, 0.0]
            })
            .collect();
        let avg = uniform_stress_average(&m, &StressField { tet, column: None }).unwrap();
        for c in avg.column.unwrap() {
            assert!((c[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unfixed_mesh_is_singular() {
        let mut s = strip(3, 3);
        // no end rings and no polar caps on a flat strip
        s.end_rings.clear();
        let m = build_wall_mesh(&s, 1.0, 2).unwrap();
        assert!(matches!(solve_elasticity(&m, 1e3, &Materials::default()), Err(Error::Singular(_))));
    }

    #[test]
    fn material_validation() {
        assert!(Material::new(0.0, 0.3).is_err());
        assert!(Material::new(1e9, 0.5).is_err());
        assert!(Material::new(1e9, 0.49).is_ok());
    }

    #[test]
    fn inverted_offset_is_reported() {
        let mut s = strip(3, 3);
        let mut frames = s.frames.clone().unwrap();
        frames[4] = LocalFrame::from_normal(-Vec3::z(), Vec3::x()).unwrap();
        s.frames = Some(frames);
        // flipping one normal folds the prisms around vertex 4
        match build_wall_mesh(&s, 1.0, 2) {
            Err(Error::InvertedElements { vertices }) => assert!(vertices.contains(&4)),
            other => panic!("expected inversion, got {other:?}"),
        }
    }
}
