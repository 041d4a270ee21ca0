//! Per-vertex normal and tangent frames from local PCA.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{SpatialIndex, TriangleSurface};
use crate::error::{Error, Result};
use crate::numeric::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    /// Outward unit normal.
    pub normal: [f64; 3],
    pub tangent1: [f64; 3],
    pub tangent2: [f64; 3],
}

impl LocalFrame {
    /// Right-handed frame around `normal` with `tangent1` as close as
    /// possible to `hint`.
    pub fn from_normal(normal: Vec3, hint: Vec3) -> Option<Self> {
        let n = normal.try_normalize(1e-12)?;
        let mut t1 = hint - n * n.dot(&hint);
        if t1.norm() < 1e-9 {
            // any direction not parallel to n
            let axis = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            t1 = axis - n * n.dot(&axis);
        }
        let t1 = t1.normalize();
        let t2 = n.cross(&t1);
        Some(Self {
            normal: n.into(),
            tangent1: t1.into(),
            tangent2: t2.into(),
        })
    }

    pub fn n(&self) -> Vec3 {
        Vec3::from(self.normal)
    }

    pub fn t1(&self) -> Vec3 {
        Vec3::from(self.tangent1)
    }

    pub fn t2(&self) -> Vec3 {
        Vec3::from(self.tangent2)
    }

    /// Largest deviation from an orthonormal right-handed frame.
    pub fn orthonormality_error(&self) -> f64 {
        let (n, a, b) = (self.n(), self.t1(), self.t2());
        [
            (n.norm() - 1.0).abs(),
            (a.norm() - 1.0).abs(),
            (b.norm() - 1.0).abs(),
            n.dot(&a).abs(),
            n.dot(&b).abs(),
            a.dot(&b).abs(),
            (a.cross(&b).dot(&n) - 1.0).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Populates `surface.frames` from PCA of each vertex's `neighborhood_k`
/// nearest vertices. Normal signs follow the triangle orientation.
pub fn local_frames(surface: &mut TriangleSurface, neighborhood_k: usize) -> Result<()> {
    if neighborhood_k < 6 {
        return Err(Error::InvalidParameter(format!("neighborhood_k {neighborhood_k} must be >= 6")));
    }
    let index = SpatialIndex::new(&surface.vertices, index_cell(surface, neighborhood_k));
    let oriented = surface.oriented_vertex_normals();
    let mut frames = Vec::with_capacity(surface.vertex_count());
    for v in 0..surface.vertex_count() {
        let nbrs = index.nearest(surface.vertices[v], neighborhood_k);
        let (eigen, _) = covariance_eigen(surface, &nbrs);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
        let (small, mid, large) = (order[0], order[1], order[2]);
        let lmax = eigen.eigenvalues[large];
        if !(lmax > 0.0) || eigen.eigenvalues[mid] <= 1e-10 * lmax {
            return Err(Error::DegenerateNeighborhood {
                vertex: v,
                reason: "covariance rank below 2".into(),
            });
        }
        let mut n: Vec3 = eigen.eigenvectors.column(small).into_owned();
        let reference = if oriented[v].norm() > 0.0 {
            oriented[v]
        } else {
            surface.vertex(v) - surface.centroid()
        };
        if n.dot(&reference) < 0.0 {
            n = -n;
        }
        let hint: Vec3 = eigen.eigenvectors.column(large).into_owned();
        frames.push(LocalFrame::from_normal(n, hint).ok_or(Error::DegenerateNeighborhood {
            vertex: v,
            reason: "zero normal".into(),
        })?);
    }
    surface.frames = Some(frames);
    Ok(())
}

/// Bucket size giving a handful of points per cell.
fn index_cell(surface: &TriangleSurface, k: usize) -> f64 {
    let edge = surface.mean_edge_length();
    if edge > 0.0 {
        return 2.0 * edge;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
    for p in &surface.vertices {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let diag = (0..3).map(|c| (hi[c] - lo[c]).powi(2)).sum::<f64>().sqrt();
    let n = surface.vertex_count().max(1) as f64;
    (diag * (k as f64 / n).cbrt()).max(1e-6)
}

fn covariance_eigen(surface: &TriangleSurface, nbrs: &[usize]) -> (SymmetricEigen<f64, nalgebra::U3>, Vec3) {
    let mut mean = Vec3::zeros();
    for &i in nbrs {
        mean += surface.vertex(i);
    }
    mean /= nbrs.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in nbrs {
        let d = surface.vertex(i) - mean;
        cov += d * d.transpose();
    }
    (SymmetricEigen::new(cov / nbrs.len() as f64), mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_plane(n: usize) -> TriangleSurface {
        let mut vertices = Vec::new();
        for j in 0..n {
            for i in 0..n {
                vertices.push([i as f64 * 0.5, j as f64 * 0.5, 2.0]);
            }
        }
        let mut triangles = Vec::new();
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let a = j * n + i;
                triangles.push([a, a + 1, a + n + 1]);
                triangles.push([a, a + n + 1, a + n]);
            }
        }
        TriangleSurface::new(vertices, triangles).unwrap()
    }

    #[test]
    fn plane_normals() {
        let mut s = grid_plane(10);
        local_frames(&mut s, 12).unwrap();
        for f in s.frames.as_ref().unwrap() {
            let angle = f.n().dot(&Vec3::z()).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 0.5, "angle {angle}");
            assert!(f.orthonormality_error() < 1e-6);
        }
    }

    #[test]
    fn collinear_neighborhood_is_degenerate() {
        let vertices: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let mut s = TriangleSurface {
            vertices,
            ..TriangleSurface::default()
        };
        assert!(matches!(local_frames(&mut s, 6), Err(Error::DegenerateNeighborhood { .. })));
        assert!(local_frames(&mut grid_plane(4), 5).is_err());
    }

    #[test]
    fn frame_from_parallel_hint() {
        let f = LocalFrame::from_normal(Vec3::new(0.0, 0.0, 2.0), Vec3::z()).unwrap();
        assert!(f.orthonormality_error() < 1e-12);
    }
}
