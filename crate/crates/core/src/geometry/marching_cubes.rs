//! Isosurface extraction from label maps.

use std::collections::HashMap;

use super::tables::TRIANGLES;
use super::TriangleSurface;
use crate::error::{Error, Result};
use crate::numeric::Vec3;
use crate::volume::{LabelMap, VoxelGrid};

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [3, 2],
    [0, 3],
    [4, 5],
    [5, 6],
    [7, 6],
    [4, 7],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Positional weld tolerance, mm.
const WELD_TOL: f64 = 1e-6;

/// Surface of the region with label `code`.
pub fn extract_surface(labels: &LabelMap, code: u8, iso: f64) -> Result<TriangleSurface> {
    extract_surface_of(labels, &[code], iso)
}

/// Surface of the union of `codes`. The indicator is smoothed with a
/// one-voxel Gaussian before contouring at `iso`.
pub fn extract_surface_of(labels: &LabelMap, codes: &[u8], iso: f64) -> Result<TriangleSurface> {
    if let Some(&c) = codes.iter().find(|&&c| labels.count(c) == 0) {
        return Err(Error::EmptyRegion(c));
    }
    let field = labels.indicator(codes).gaussian_smooth([1.0; 3]);
    let (vertices, mut triangles) = polygonize(&field, iso);
    if triangles.is_empty() {
        return Err(Error::NonManifold(format!("no isosurface at level {iso}")));
    }
    let (vertices, remap) = weld(&vertices);
    for t in triangles.iter_mut() {
        t.iter_mut().for_each(|i| *i = remap[*i]);
    }
    triangles.retain(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2]);
    let (vertices, mut triangles) = compact(vertices, triangles);

    // outward means facing down the indicator gradient
    let flux: f64 = triangles
        .iter()
        .map(|t| {
            let (a, b, c) = (Vec3::from(vertices[t[0]]), Vec3::from(vertices[t[1]]), Vec3::from(vertices[t[2]]));
            let centroid = (a + b + c) / 3.0;
            let (_, g) = field.sample_with_gradient([centroid.x, centroid.y, centroid.z]);
            (b - a).cross(&(c - a)).dot(&Vec3::from(g))
        })
        .sum();
    if flux > 0.0 {
        triangles.iter_mut().for_each(|t| t.swap(1, 2));
    }

    let surface = TriangleSurface::new(vertices, triangles)?;
    surface.check_manifold()?;
    Ok(surface)
}

fn polygonize(field: &VoxelGrid, iso: f64) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let [nx, ny, nz] = field.dims();
    let data = field.data();
    let value = |p: [usize; 3]| data[field.index(p[0], p[1], p[2])] as f64;
    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner = |c: usize| [i + CORNERS[c][0], j + CORNERS[c][1], k + CORNERS[c][2]];
                let mut values = [0.0; 8];
                let mut case = 0usize;
                for (c, v) in values.iter_mut().enumerate() {
                    *v = value(corner(c));
                    if *v < iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut ids = [usize::MAX; 12];
                for tri in TRIANGLES[case].chunks(3).take_while(|t| t[0] >= 0) {
                    let mut t = [0usize; 3];
                    for (slot, &e) in t.iter_mut().zip(tri) {
                        let e = e as usize;
                        if ids[e] == usize::MAX {
                            let [a, b] = EDGES[e];
                            let (pa, pb) = (corner(a), corner(b));
                            let axis = (0..3).find(|&d| pa[d] != pb[d]).unwrap();
                            let key = (field.index(pa[0], pa[1], pa[2]), axis);
                            ids[e] = *edge_vertex.entry(key).or_insert_with(|| {
                                let (va, vb) = (values[a], values[b]);
                                let s = if va == vb { 0.5 } else { ((iso - va) / (vb - va)).clamp(0.0, 1.0) };
                                let (xa, xb) = (field.point_of(pa[0], pa[1], pa[2]), field.point_of(pb[0], pb[1], pb[2]));
                                vertices.push([
                                    xa[0] + s * (xb[0] - xa[0]),
                                    xa[1] + s * (xb[1] - xa[1]),
                                    xa[2] + s * (xb[2] - xa[2]),
                                ]);
                                vertices.len() - 1
                            });
                        }
                        *slot = ids[e];
                    }
                    triangles.push(t);
                }
            }
        }
    }
    (vertices, triangles)
}

/// Merges vertices closer than the weld tolerance. Returns the kept
/// vertices and the old-to-new index map.
fn weld(vertices: &[[f64; 3]]) -> (Vec<[f64; 3]>, Vec<usize>) {
    let cell = |p: &[f64; 3]| p.map(|c| (c / WELD_TOL).floor() as i64);
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut kept: Vec<[f64; 3]> = Vec::new();
    let mut remap = Vec::with_capacity(vertices.len());
    for p in vertices {
        let c = cell(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &q in list {
                            let d: f64 = (0..3).map(|i| (kept[q][i] - p[i]).powi(2)).sum();
                            if d <= WELD_TOL * WELD_TOL {
                                found = Some(q);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        let id = found.unwrap_or_else(|| {
            kept.push(*p);
            buckets.entry(c).or_default().push(kept.len() - 1);
            kept.len() - 1
        });
        remap.push(id);
    }
    (kept, remap)
}


fn compact(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let mut map = vec![usize::MAX; vertices.len()];
    let mut out = Vec::new();
    let triangles = triangles
        .into_iter()
        .map(|t| {
            t.map(|i| {
                if map[i] == usize::MAX {
                    map[i] = out.len();
                    out.push(vertices[i]);
                }
                map[i]
            })
        })
        .collect();
    (out, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{LUMEN, WALL};

    fn ball(radius: f64, spacing: f64) -> LabelMap {
        let n = (2.0 * (radius + 4.0 * spacing) / spacing).ceil() as usize;
        let o = -0.5 * (n - 1) as f64 * spacing;
        let grid = VoxelGrid::from_fn([n; 3], [spacing; 3], [o; 3], |p| {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if r < radius {
                LUMEN as f32
            } else {
                0.0
            }
        })
        .unwrap();
        LabelMap::new(grid).unwrap()
    }

    #[test]
    fn sphere_is_closed_and_outward() {
        let s = extract_surface(&ball(6.0, 1.0), LUMEN, 0.5).unwrap();
        assert_eq!(s.euler_characteristic(), 2);
        assert!(s.is_closed());
        assert!(s.signed_volume() > 0.0);
        let expected = 4.0 / 3.0 * std::f64::consts::PI * 216.0;
        assert!((s.signed_volume() / expected - 1.0).abs() < 0.1);
    }

    #[test]
    fn empty_region_is_an_error() {
        assert!(matches!(extract_surface(&ball(4.0, 1.0), WALL, 0.5), Err(Error::EmptyRegion(1))));
    }

    #[test]
    fn weld_merges_close_points() {
        let (kept, remap) = weld(&[[0.0; 3], [1.0, 0.0, 0.0], [1e-7, 0.0, 0.0]]);
        assert_eq!(kept.len(), 2);
        assert_eq!(remap, vec![0, 1, 0]);
    }
}
