//! Analytic meshes and small helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rsii_core::geometry::TriangleSurface;

/// Geodesic sphere: an icosahedron subdivided `level` times, projected on
/// the sphere. Outward orientation.
pub fn icosphere(radius: f64, level: usize, center: [f64; 3]) -> TriangleSurface {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(4 * f.len());
        for tri in &f {
            let mut m = [0; 3];
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[e] = *mid.entry(key).or_insert_with(|| {
                    v.push([0, 1, 2].map(|c| 0.5 * (v[a][c] + v[b][c])));
                    v.len() - 1
                });
            }
            next.push([tri[0], m[0], m[2]]);
            next.push([tri[1], m[1], m[0]]);
            next.push([tri[2], m[2], m[1]]);
            next.push(m);
        }
        f = next;
    }
    for p in &mut v {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        *p = [0, 1, 2].map(|c| center[c] + radius * p[c] / n);
    }
    TriangleSurface::new(v, f).unwrap()
}

/// Open tube of radius `radius` along z over `[-length/2, length/2]`,
/// `nt` vertices around and `nz` rings. Outward orientation.
pub fn tube(radius: f64, length: f64, nt: usize, nz: usize) -> TriangleSurface {
    let mut v = Vec::with_capacity(nt * nz);
    for k in 0..nz {
        let z = -0.5 * length + length * k as f64 / (nz - 1) as f64;
        // staggered rings keep triangles close to equilateral
        let shift = if k % 2 == 0 { 0.0 } else { 0.5 };
        for i in 0..nt {
            let a = std::f64::consts::TAU * (i as f64 + shift) / nt as f64;
            v.push([radius * a.cos(), radius * a.sin(), z]);
        }
    }
    let mut f = Vec::new();
    for k in 0..nz - 1 {
        for i in 0..nt {
            let a = k * nt + i;
            let b = k * nt + (i + 1) % nt;
            let c = (k + 1) * nt + i;
            let d = (k + 1) * nt + (i + 1) % nt;
            f.push([a, b, c]);
            f.push([b, d, c]);
        }
    }
    TriangleSurface::new(v, f).unwrap()
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    rsii_core::numeric::sorted_quantile(&v, q)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
