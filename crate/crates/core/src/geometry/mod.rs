//! Wall surface extraction, local frames and curvature.

mod curvature;
mod frames;
mod marching_cubes;
mod spatial;
mod tables;

pub use curvature::{curvature_radii, curvature_radius, fit_principal_curvatures, CurvatureEstimate, MlesacParams};
pub use frames::{local_frames, LocalFrame};
pub use marching_cubes::{extract_surface, extract_surface_of};
pub use spatial::SpatialIndex;


use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Vec3;
use crate::registration::DisplacementField;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleSurface {
    pub vertices: Vec<[f64; 3]>,
    /// Counter-clockwise seen from outside.
    pub triangles: Vec<[usize; 3]>,
    pub frames: Option<Vec<LocalFrame>>,
    pub curvature_radius: Option<Vec<f64>>,
    /// Vertices whose curvature fit hit the flat clamp.
    pub curvature_flags: Option<Vec<bool>>,
    /// Boundary loops, lowest z first. Empty for closed surfaces.
    pub end_rings: Vec<Vec<usize>>,
}

/// Geometry parameters used by frames and curvature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    pub neighborhood_k: usize,
    /// Curvature neighborhood radius in mm; `None` derives it from the mean
    /// edge length times `radius_edge_factor`.
    pub neighborhood_radius: Option<f64>,
    pub radius_edge_factor: f64,
    pub mlesac: MlesacParams,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            neighborhood_k: 16,
            neighborhood_radius: None,
            radius_edge_factor: 11.0,
            mlesac: MlesacParams::default(),
        }
    }
}

impl GeometryParams {
    pub fn resolve_radius(&self, surface: &TriangleSurface) -> f64 {
        self.neighborhood_radius
            .unwrap_or_else(|| self.radius_edge_factor * surface.mean_edge_length())
    }
}

impl TriangleSurface {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::NonManifold(format!("triangle {t:?} references a missing vertex")));
        }
        let mut s = Self {
            vertices,
            triangles,
            ..Self::default()
        };
        s.end_rings = s.boundary_loops()?;
        s.end_rings.sort_by(|a, b| ring_z(&s.vertices, a).total_cmp(&ring_z(&s.vertices, b)));
        Ok(s)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, i: usize) -> Vec3 {
        Vec3::from(self.vertices[i])
    }

    /// Undirected edge -> number of incident triangles.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut map = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *map.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        map
    }

    pub fn euler_characteristic(&self) -> i64 {
        let used = self.used_vertex_count();
        used as i64 - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    fn used_vertex_count(&self) -> usize {
        let mut used = vec![false; self.vertices.len()];
        self.triangles.iter().flatten().for_each(|&i| used[i] = true);
        used.iter().filter(|&&u| u).count()
    }

    /// Checks that every edge has one or two triangles and that shared
    /// edges are traversed in opposite directions.
    pub fn check_manifold(&self) -> Result<()> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::NonManifold(format!("degenerate triangle {t:?}")));
            }
            for e in 0..3 {
                *directed.entry((t[e], t[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        for (&(a, b), &n) in &directed {
            if n > 1 {
                return Err(Error::NonManifold(format!("edge ({a}, {b}) used {n} times in one direction")));
            }
        }
        for (&(a, b), &n) in &self.edge_counts() {
            if n > 2 {
                return Err(Error::NonManifold(format!("edge ({a}, {b}) shared by {n} triangles")));
            }
        }
        Ok(())
    }

    /// Closed boundary loops formed by edges with a single triangle.
    pub fn boundary_loops(&self) -> Result<Vec<Vec<usize>>> {
        let counts = self.edge_counts();
        // directed boundary edges keep the triangle's orientation
        let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                if counts[&(a.min(b), a.max(b))] == 1 {
                    next.entry(a).or_default().push(b);
                }
            }
        }
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut visited = std::collections::HashSet::new();
        let mut loops = Vec::new();
        for s in starts {
            if visited.contains(&s) {
                continue;
            }
            let mut ring = vec![s];
            visited.insert(s);
            let mut cur = s;
            loop {
                let succ = next.get(&cur).map(|v| v.as_slice()).unwrap_or(&[]);
                if succ.len() != 1 {
                    return Err(Error::NonManifold(format!("boundary vertex {cur} has {} successors", succ.len())));
                }
                let n = succ[0];
                if n == s {
                    break;
                }
                if !visited.insert(n) {
                    return Err(Error::NonManifold(format!("boundary loop revisits vertex {n}")));
                }
                ring.push(n);
                cur = n;
            }
            loops.push(ring);
        }
        Ok(loops)
    }

    pub fn is_closed(&self) -> bool {
        self.end_rings.is_empty()
    }

    /// Sum of signed tetra volumes against the origin (mm^3); positive for
    /// outward-oriented closed surfaces.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (self.vertex(t[0]), self.vertex(t[1]), self.vertex(t[2]));
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let counts = self.edge_counts();
        if counts.is_empty() {
            return 0.0;
        }
        let mut keys: Vec<_> = counts.keys().copied().collect();
        keys.sort_unstable();
        keys.iter().map(|&(a, b)| (self.vertex(a) - self.vertex(b)).norm()).sum::<f64>() / keys.len() as f64
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * (self.vertex(b) - self.vertex(a)).cross(&(self.vertex(c) - self.vertex(a))).norm()
    }

    /// One third of the area of every incident triangle.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.triangle_area(t) / 3.0;
            for &v in tri {
                areas[v] += a;
            }
        }
        areas
    }

    /// Area-weighted normals from triangle orientation (unit, or zero for
    /// isolated vertices).
    pub fn oriented_vertex_normals(&self) -> Vec<Vec3> {
        let mut n = vec![Vec3::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let (a, b, c) = (self.vertex(t[0]), self.vertex(t[1]), self.vertex(t[2]));
            let face = (b - a).cross(&(c - a));
            for &i in t {
                n[i] += face;
            }
        }
        n.iter_mut().for_each(|v| {
            let len = v.norm();
            if len > 0.0 {
                *v /= len;
            }
        });
        n
    }

    /// Triangle indices incident on each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (ti, t) in self.triangles.iter().enumerate() {
            for &v in t {
                out[v].push(ti);
            }
        }
        out
    }

    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                out[a].push(b);
                out[b].push(a);
            }
        }
        out.iter_mut().for_each(|v| {
            v.sort_unstable();
            v.dedup();
        });
        out
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = Vec3::zeros();
        for v in &self.vertices {
            c += Vec3::from(*v);
        }
        c / self.vertices.len().max(1) as f64
    }

    /// Applies `p -> scale * rotation * p + translation` and drops derived
    /// per-vertex data (frames, curvature).
    pub fn transformed(&self, rotation: &nalgebra::Matrix3<f64>, translation: Vec3, scale: f64) -> TriangleSurface {
        let vertices = self
            .vertices
            .iter()
            .map(|v| {
                let p = scale * (rotation * Vec3::from(*v)) + translation;
                [p.x, p.y, p.z]
            })
            .collect();
        TriangleSurface {
            vertices,
            triangles: self.triangles.clone(),
            frames: None,
            curvature_radius: None,
            curvature_flags: None,
            end_rings: self.end_rings.clone(),
        }
    }
}

/// Taubin smoothing parameters. Zero iterations disables smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingParams {
    pub iterations: usize,
    pub lambda: f64,
    pub mu: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            iterations: 60,
            lambda: 0.5,
            mu: -0.53,
        }
    }
}

impl TriangleSurface {
    /// Taubin lambda/mu smoothing with umbrella weights. Boundary vertices
    /// only see their boundary neighbors, so end rings slide along
    /// themselves instead of shrinking into the surface. Derived per-vertex
    /// data is cleared.
    pub fn smooth(&mut self, params: &SmoothingParams) {
        if params.iterations == 0 {
            return;
        }
        let mut nbrs = self.vertex_neighbors();
        let mut boundary = vec![false; self.vertex_count()];
        for ring in &self.end_rings {
            for (i, &v) in ring.iter().enumerate() {
                boundary[v] = true;
                let prev = ring[(i + ring.len() - 1) % ring.len()];
                let next = ring[(i + 1) % ring.len()];
                nbrs[v] = vec![prev, next];
            }
        }
        let mut next = self.vertices.clone();
        for _ in 0..params.iterations {
            for factor in [params.lambda, params.mu] {
                for (v, list) in nbrs.iter().enumerate() {
                    if list.is_empty() {
                        continue;
                    }
                    let p = self.vertices[v];
                    let mut mean = [0.0; 3];
                    for &u in list {
                        for c in 0..3 {
                            mean[c] += self.vertices[u][c];
                        }
                    }
                    for c in 0..3 {
                        next[v][c] = p[c] + factor * (mean[c] / list.len() as f64 - p[c]);
                    }
                    if boundary[v] {
                        // end rings stay in their cutting plane
                        next[v][2] = p[2];
                    }
                }
                std::mem::swap(&mut self.vertices, &mut next);
            }
        }
        self.frames = None;
        self.curvature_radius = None;
        self.curvature_flags = None;
    }
}

fn ring_z(vertices: &[[f64; 3]], ring: &[usize]) -> f64 {
    ring.iter().map(|&i| vertices[i][2]).sum::<f64>() / ring.len().max(1) as f64
}

/// Per-vertex trilinear interpolation of a displacement field. The flag is
/// set for vertices outside the field extent (value clamped to the edge).
pub fn interpolate_at_vertices(field: &DisplacementField, surface: &TriangleSurface) -> (Vec<[f64; 3]>, Vec<bool>) {
    surface.vertices.iter().map(|&p| field.sample(p)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VoxelGrid;

    fn tetra() -> TriangleSurface {
        TriangleSurface::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn tetra_topology() {
        let t = tetra();
        assert_eq!(t.euler_characteristic(), 2);
        assert!(t.is_closed());
        t.check_manifold().unwrap();
        assert!((t.signed_volume() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn open_strip_has_one_loop() {
        let s = TriangleSurface::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        assert_eq!(s.end_rings.len(), 1);
        assert_eq!(s.end_rings[0].len(), 4);
    }

    #[test]
    fn interpolation_cases() {
        let grid = VoxelGrid::zeros([21, 5, 5], [1.0; 3], [0.0, -2.0, -2.0]).unwrap();
        let surf = TriangleSurface::new(vec![[10.0, 0.0, 0.0], [3.3, 1.1, -0.5], [7.0, 0.0, 1.0]], vec![[0, 1, 2]]).unwrap();

        let constant = DisplacementField::from_fn(&grid, |_| [0.1, -0.2, 0.3]);
        let (v, flags) = interpolate_at_vertices(&constant, &surf);
        for u in &v {
            for c in 0..3 {
                assert!((u[c] - [0.1, -0.2, 0.3][c]).abs() < 1e-12);
            }
        }
        assert!(flags.iter().all(|f| !f));

        let ramp = DisplacementField::from_fn(&grid, |p| [p[0], 0.0, 0.0]);
        let (v, _) = interpolate_at_vertices(&ramp, &surf);
        assert!((v[0][0] - 10.0).abs() < 1e-4 && v[0][1].abs() < 1e-12);

        let zero = DisplacementField::zeros_like(&grid);
        assert!(interpolate_at_vertices(&zero, &surf).0.iter().flatten().all(|&c| c == 0.0));

        let outside = TriangleSurface::new(vec![[50.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let (_, flags) = interpolate_at_vertices(&zero, &outside);
        assert_eq!(flags, vec![true, false, false]);
    }
}
