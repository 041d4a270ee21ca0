//! Robust local curvature radius.
//!
//! Each neighborhood is expressed in the vertex frame and fitted with a
//! height field `h = c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2` by MLESAC
//! (six-point minimal samples, truncated squared residual score, least
//! squares refinement on the inliers). A quadric alone reads curvature too
//! high by about `rho^2 / (4 R^2)` on a sphere, so the inlier heights are
//! then corrected by the quartic term a surface of the fitted, constant
//! principal curvatures would have, and refitted. The principal curvatures
//! come from the shape operator of the patch at the vertex; the reported
//! radius is the reciprocal of the larger absolute curvature, which is the
//! circumferential radius on a tube and the radius on a sphere.

use nalgebra::{Matrix2, Matrix6, SymmetricEigen, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LocalFrame, SpatialIndex, TriangleSurface};
use crate::error::{Error, Result};
use crate::numeric::Vec3;

pub const MIN_NEIGHBORS: usize = 10;
const SAMPLE: usize = 6;
const CORRECTION_PASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlesacParams {
    /// Random minimal samples drawn per vertex.
    pub trials: usize,
    /// mm.
    pub inlier_tol: f64,
    pub seed: u64,
    /// Apply the constant-curvature fourth-order correction.
    pub quartic_correction: bool,
}

impl Default for MlesacParams {
    fn default() -> Self {
        Self {
            trials: 200,
            inlier_tol: 0.3,
            seed: 0,
            quartic_correction: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureEstimate {
    /// mm, always positive.
    pub radius: f64,
    /// Signed principal curvatures (1/mm), negative when the surface bends
    /// away from the normal.
    pub principal: [f64; 2],
    /// Radius hit the flat (upper) clamp.
    pub near_flat: bool,
    /// Radius hit either clamp.
    pub clamped: bool,
    pub inliers: usize,
}

/// Curvature radius at one vertex. Builds a throwaway spatial index; use
/// [`curvature_radii`] for whole surfaces.
pub fn curvature_radius(
    surface: &TriangleSurface,
    vertex: usize,
    neighborhood_radius: f64,
    mlesac: &MlesacParams,
) -> Result<CurvatureEstimate> {
    let index = SpatialIndex::new(&surface.vertices, neighborhood_radius.max(1e-6));
    estimate(surface, &index, vertex, neighborhood_radius, mlesac)
}

/// Fills `surface.curvature_radius` and `surface.curvature_flags`.
pub fn curvature_radii(surface: &mut TriangleSurface, neighborhood_radius: f64, mlesac: &MlesacParams) -> Result<Vec<CurvatureEstimate>> {
    if !(neighborhood_radius > 0.0) {
        return Err(Error::InvalidParameter("neighborhood radius must be > 0".into()));
    }
    let index = SpatialIndex::new(&surface.vertices, neighborhood_radius);
    let estimates = (0..surface.vertex_count())
        .map(|v| estimate(surface, &index, v, neighborhood_radius, mlesac))
        .collect::<Result<Vec<_>>>()?;
    surface.curvature_radius = Some(estimates.iter().map(|e| e.radius).collect());
    surface.curvature_flags = Some(estimates.iter().map(|e| e.clamped).collect());
    Ok(estimates)
}

fn estimate(
    surface: &TriangleSurface,
    index: &SpatialIndex,
    vertex: usize,
    radius: f64,
    params: &MlesacParams,
) -> Result<CurvatureEstimate> {
    let origin = surface.vertex(vertex);
    let nbrs = index.within(surface.vertices[vertex], radius);
    if nbrs.len() < MIN_NEIGHBORS {
        return Err(Error::DegenerateNeighborhood {
            vertex,
            reason: format!("{} neighbors within {radius} mm, need {MIN_NEIGHBORS}", nbrs.len()),
        });
    }
    let points: Vec<Vec3> = nbrs.iter().map(|&i| surface.vertex(i)).collect();
    let frame = match surface.frames.as_ref() {
        Some(f) => f[vertex],
        None => pca_frame(&points).ok_or(Error::DegenerateNeighborhood {
            vertex,
            reason: "collinear neighborhood".into(),
        })?,
    };
    let seed = params.seed ^ (vertex as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = fit_principal_curvatures(&points, origin, &frame, params, &mut rng);
    let (principal, inliers) = fit.unwrap_or(([0.0, 0.0], 0));
    let kmax = principal[0].abs().max(principal[1].abs());
    let (lo, hi) = (0.5 * radius, 100.0 * radius);
    let raw = if kmax > 0.0 { 1.0 / kmax } else { f64::INFINITY };
    let near_flat = raw >= hi;
    Ok(CurvatureEstimate {
        radius: raw.clamp(lo, hi),
        principal,
        near_flat,
        clamped: near_flat || raw <= lo,
        inliers,
    })
}

fn pca_frame(points: &[Vec3]) -> Option<LocalFrame> {
    let mean = points.iter().sum::<Vec3>() / points.len() as f64;
    let cov = points.iter().map(|p| (p - mean) * (p - mean).transpose()).sum::<nalgebra::Matrix3<f64>>();
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if eig.eigenvalues[order[1]] <= 1e-12 * eig.eigenvalues[order[2]].max(1e-300) {
        return None;
    }
    LocalFrame::from_normal(eig.eigenvectors.column(order[0]).into_owned(), eig.eigenvectors.column(order[2]).into_owned())
}

fn basis(x: f64, y: f64) -> Vector6<f64> {
    Vector6::new(1.0, x, y, x * x, x * y, y * y)
}

/// Least-squares quadric through `(x, y, h)` samples.
fn solve(samples: impl Iterator<Item = (f64, f64, f64)>) -> Option<Vector6<f64>> {
    let mut ata = Matrix6::zeros();
    let mut atb = Vector6::zeros();
    for (x, y, h) in samples {
        let b = basis(x, y);
        ata += b * b.transpose();
        atb += b * h;
    }
    let c = ata.cholesky()?.solve(&atb);
    c.iter().all(|v| v.is_finite()).then_some(c)
}

/// Fourth-order height term of a surface with constant principal
/// curvatures equal to those of the quadric `c`. Exact for spheres and
/// cylinders, where it removes the truncation bias of the quadric fit.
fn quartic_term(c: &Vector6<f64>) -> impl Fn(f64, f64) -> f64 {
    let eig = SymmetricEigen::new(Matrix2::new(2.0 * c[3], c[4], c[4], 2.0 * c[5]));
    let (k1, k2) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let d = eig.eigenvectors.column(0).into_owned();
    let cross = 0.5 * k1 * k2 * (k1 + k2);
    move |x, y| {
        let u = d[0] * x + d[1] * y;
        let v = -d[1] * x + d[0] * y;
        (k1.powi(3) * u.powi(4) + k2.powi(3) * v.powi(4) + 2.0 * cross * u * u * v * v) / 8.0
    }
}

/// Principal curvatures at `origin` of a robust quadric fit to `points`,
/// and the inlier count. `None` when no sample produced a usable fit.
pub fn fit_principal_curvatures(
    points: &[Vec3],
    origin: Vec3,
    frame: &LocalFrame,
    params: &MlesacParams,
    rng: &mut ChaCha8Rng,
) -> Option<([f64; 2], usize)> {
    let (t1, t2, n) = (frame.t1(), frame.t2(), frame.n());
    let local: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| {
            let d = p - origin;
            (d.dot(&t1), d.dot(&t2), d.dot(&n))
        })
        .collect();
    if local.len() < SAMPLE {
        return None;
    }
    let tol2 = params.inlier_tol * params.inlier_tol;
    let residual = |c: &Vector6<f64>, s: &(f64, f64, f64)| s.2 - basis(s.0, s.1).dot(c);
    let score = |c: &Vector6<f64>| local.iter().map(|s| residual(c, s).powi(2).min(tol2)).sum::<f64>();

    let mut best: Option<(f64, Vector6<f64>)> = None;
    for _ in 0..params.trials.max(1) {
        let pick = rand::seq::index::sample(rng, local.len(), SAMPLE);
        let Some(c) = solve(pick.iter().map(|i| local[i])) else { continue };
        let s = score(&c);
        if best.as_ref().map_or(true, |b| s < b.0) {
            best = Some((s, c));
        }
    }
    let (_, mut c) = best?;
    let mut inliers: Vec<(f64, f64, f64)> = Vec::new();
    for _ in 0..3 {
        inliers = local.iter().copied().filter(|p| residual(&c, p).powi(2) <= tol2).collect();
        if inliers.len() < SAMPLE {
            break;
        }
        match solve(inliers.iter().copied()) {
            Some(refined) => c = refined,
            None => break,
        }
    }
    if params.quartic_correction && inliers.len() >= SAMPLE {
        for _ in 0..CORRECTION_PASSES {
            let q = quartic_term(&c);
            match solve(inliers.iter().map(|&(x, y, h)| (x, y, h - q(x, y)))) {
                Some(corrected) => c = corrected,
                None => break,
            }
        }
    }
    Some((shape_operator_curvatures(&c), inliers.len()))
}

fn shape_operator_curvatures(c: &Vector6<f64>) -> [f64; 2] {
    let (hx, hy) = (c[1], c[2]);
    let (hxx, hxy, hyy) = (2.0 * c[3], c[4], 2.0 * c[5]);
    let w = (1.0 + hx * hx + hy * hy).sqrt();
    let first = Matrix2::new(1.0 + hx * hx, hx * hy, hx * hy, 1.0 + hy * hy);
    let second = Matrix2::new(hxx, hxy, hxy, hyy) / w;
    // eigenvalues of I^-1 II via the symmetric form L^-1 II L^-T
    let Some(chol) = first.cholesky() else { return [0.0, 0.0] };
    let l_inv = chol.l().try_inverse().unwrap_or_else(Matrix2::identity);
    let sym = l_inv * second * l_inv.transpose();
    let eig = SymmetricEigen::new(0.5 * (sym + sym.transpose()));
    let (a, b) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    if a.abs() >= b.abs() {
        [a, b]
    } else {
        [b, a]
    }
}
