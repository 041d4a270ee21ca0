//! Registration energy: sum of squared intensity differences plus isotropic
//! total variation of the displacement, where all nine first derivatives
//! `d u_c / d x_d` share one square root per voxel.

use super::field::DisplacementField;
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::volume::VoxelGrid;

/// Smoothing of the TV root in the differentiable surrogate.
pub const TV_EPSILON: f64 = 1e-6;

/// Jacobian stack per voxel, `[c * 3 + d] = d u_c / d x_d`.
pub type Jacobian = [f64; 9];

/// Forward differences with Neumann boundary (zero derivative on the last
/// slab of each axis).
pub fn forward_gradient(field: &[[f64; 3]], dims: [usize; 3], spacing: [f64; 3]) -> Vec<Jacobian> {
    let [nx, ny, nz] = dims;
    let strides = [1, nx, nx * ny];
    let mut out = vec![[0.0; 9]; field.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                let coord = [i, j, k];
                let u = field[idx];
                let g = &mut out[idx];
                for d in 0..3 {
                    if coord[d] + 1 < dims[d] {
                        let v = field[idx + strides[d]];
                        let inv = 1.0 / spacing[d];
                        for c in 0..3 {
                            g[c * 3 + d] = (v[c] - u[c]) * inv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`forward_gradient`]; entries of `q` on the Neumann slabs are
/// ignored since the forward operator never produces them.
pub fn gradient_adjoint(q: &[Jacobian], dims: [usize; 3], spacing: [f64; 3]) -> Vec<[f64; 3]> {
    let [nx, ny, nz] = dims;
    let strides = [1, nx, nx * ny];
    let mut out = vec![[0.0; 3]; q.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                let coord = [i, j, k];
                let o = &mut out[idx];
                for d in 0..3 {
                    let inv = 1.0 / spacing[d];
                    if coord[d] + 1 < dims[d] {
                        for c in 0..3 {
                            o[c] -= q[idx][c * 3 + d] * inv;
                        }
                    }
                    if coord[d] > 0 {
                        let prev = &q[idx - strides[d]];
                        for c in 0..3 {
                            o[c] += prev[c * 3 + d] * inv;
                        }
                    }
                }
            }
        }
    }
    out
}

#[inline]
pub(crate) fn jac_norm(g: &Jacobian) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Per-voxel squared residuals `(fixed(x) - moving(x + u(x)))^2`, summed.
pub(crate) fn data_sum(fixed: &VoxelGrid, moving: &VoxelGrid, field: &[[f64; 3]]) -> f64 {
    let dims = fixed.dims();
    compensated_sum(field.iter().enumerate().map(|(idx, u)| {
        let [i, j, k] = coords(idx, dims);
        let p = fixed.point_of(i, j, k);
        let r = fixed.data()[idx] as f64 - moving.sample_trilinear([p[0] + u[0], p[1] + u[1], p[2] + u[2]]);
        r * r
    }))
}

/// Residual and moving-image gradient at every warped voxel center.
pub(crate) fn data_residuals(fixed: &VoxelGrid, moving: &VoxelGrid, field: &[[f64; 3]]) -> Vec<(f64, [f64; 3])> {
    let dims = fixed.dims();
    field
        .iter()
        .enumerate()
        .map(|(idx, u)| {
            let [i, j, k] = coords(idx, dims);
            let p = fixed.point_of(i, j, k);
            let (m, grad) = moving.sample_with_gradient([p[0] + u[0], p[1] + u[1], p[2] + u[2]]);
            (fixed.data()[idx] as f64 - m, grad)
        })
        .collect()
}

pub(crate) fn tv_sum(jac: &[Jacobian]) -> f64 {
    compensated_sum(jac.iter().map(jac_norm))
}

#[inline]
pub(crate) fn coords(idx: usize, dims: [usize; 3]) -> [usize; 3] {
    let i = idx % dims[0];
    let rest = idx / dims[0];
    [i, rest % dims[1], rest / dims[1]]
}

/// Data term and TV term of the exact (non-smoothed) energy, each already
/// multiplied by the voxel volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    pub data: f64,
    pub tv: f64,
    pub lambda_tv: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.data + self.lambda_tv * self.tv
    }
}

pub(crate) fn check_geometry(fixed: &VoxelGrid, field: &DisplacementField) -> Result<()> {
    if !field.matches(fixed) {
        return Err(Error::GeometryMismatch(format!(
            "field dims {:?} / spacing {:?} / origin {:?} do not match fixed image dims {:?} / spacing {:?} / origin {:?}",
            field.dims(),
            field.spacing(),
            field.origin(),
            fixed.dims(),
            fixed.spacing(),
            fixed.origin()
        )));
    }
    Ok(())
}

pub fn energy_terms(
    fixed: &VoxelGrid,
    moving: &VoxelGrid,
    field: &DisplacementField,
    lambda_tv: f64,
) -> Result<EnergyTerms> {
    check_geometry(fixed, field)?;
    let vol = fixed.voxel_volume();
    let jac = forward_gradient(field.vectors(), fixed.dims(), fixed.spacing());
    Ok(EnergyTerms {
        data: vol * data_sum(fixed, moving, field.vectors()),
        tv: vol * tv_sum(&jac),
        lambda_tv,
    })
}

/// Exact energy and the gradient of the differentiable surrogate (TV root
/// smoothed by [`TV_EPSILON`]).
pub fn registration_energy_and_gradient(
    fixed: &VoxelGrid,
    moving: &VoxelGrid,
    field: &DisplacementField,
    lambda_tv: f64,
) -> Result<(f64, Vec<[f64; 3]>)> {
    check_geometry(fixed, field)?;
    let vol = fixed.voxel_volume();
    let dims = fixed.dims();
    let spacing = fixed.spacing();
    let residuals = data_residuals(fixed, moving, field.vectors());
    let jac = forward_gradient(field.vectors(), dims, spacing);

    let data = vol * compensated_sum(residuals.iter().map(|(r, _)| r * r));
    let tv = vol * tv_sum(&jac);

    let normalized: Vec<Jacobian> = jac
        .iter()
        .map(|g| {
            let n = (g.iter().map(|v| v * v).sum::<f64>() + TV_EPSILON * TV_EPSILON).sqrt();
            let mut q = *g;
            q.iter_mut().for_each(|v| *v /= n);
            q
        })
        .collect();
    let tv_grad = gradient_adjoint(&normalized, dims, spacing);
    let gradient = residuals
        .iter()
        .zip(tv_grad.iter())
        .map(|((r, gm), gt)| {
            let mut g = [0.0; 3];
            for c in 0..3 {
                g[c] = vol * (-2.0 * r * gm[c] + lambda_tv * gt[c]);
            }
            g
        })
        .collect();
    Ok((data + lambda_tv * tv, gradient))
}

/// Smoothed-TV surrogate energy whose exact gradient is returned by
/// [`registration_energy_and_gradient`].
pub fn surrogate_energy(fixed: &VoxelGrid, moving: &VoxelGrid, field: &DisplacementField, lambda_tv: f64) -> Result<f64> {
    check_geometry(fixed, field)?;
    let vol = fixed.voxel_volume();
    let jac = forward_gradient(field.vectors(), fixed.dims(), fixed.spacing());
    let tv = compensated_sum(
        jac.iter()
            .map(|g| (g.iter().map(|v| v * v).sum::<f64>() + TV_EPSILON * TV_EPSILON).sqrt()),
    );
    Ok(vol * (data_sum(fixed, moving, field.vectors()) + lambda_tv * tv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(dims: [usize; 3], spacing: [f64; 3], shift: f64) -> VoxelGrid {
        VoxelGrid::from_fn(dims, spacing, [0.0; 3], |p| {
            let c = [3.5 + shift, 3.5, 3.5];
            let r2: f64 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum();
            (100.0 * (-r2 / 6.0).exp()) as f32
        })
        .unwrap()
    }

    #[test]
    fn identity_has_zero_energy_and_gradient() {
        let g = blob([8, 8, 8], [1.0; 3], 0.0);
        let f = DisplacementField::zeros_like(&g);
        let (e, grad) = registration_energy_and_gradient(&g, &g, &f, 3.0).unwrap();
        assert_eq!(e, 0.0);
        assert!(grad.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_field_has_zero_tv() {
        let g = blob([8, 8, 8], [1.0; 3], 0.0);
        let f = DisplacementField::from_fn(&g, |_| [0.3, -1.2, 2.5]);
        let terms = energy_terms(&g, &g, &f, 50.0).unwrap();
        assert_eq!(terms.tv, 0.0);
    }

    #[test]
    fn adjoint_identity() {
        let dims = [5, 4, 3];
        let spacing = [0.7, 1.3, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let u: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let mut q: Vec<Jacobian> = (0..n).map(|_| std::array::from_fn(|_| rng.gen())).collect();
        // zero the slabs the forward operator never writes
        for (idx, qq) in q.iter_mut().enumerate() {
            let c = coords(idx, dims);
            for d in 0..3 {
                if c[d] + 1 == dims[d] {
                    for comp in 0..3 {
                        qq[comp * 3 + d] = 0.0;
                    }
                }
            }
        }
        let du = forward_gradient(&u, dims, spacing);
        let dtq = gradient_adjoint(&q, dims, spacing);
        let lhs: f64 = du.iter().zip(&q).map(|(a, b)| (0..9).map(|i| a[i] * b[i]).sum::<f64>()).sum();
        let rhs: f64 = u.iter().zip(&dtq).map(|(a, b)| (0..3).map(|i| a[i] * b[i]).sum::<f64>()).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let g = blob([8, 8, 8], [1.0; 3], 0.0);
        let other = VoxelGrid::zeros([8, 8, 7], [1.0; 3], [0.0; 3]).unwrap();
        let f = DisplacementField::zeros_like(&other);
        assert!(matches!(
            registration_energy_and_gradient(&g, &g, &f, 1.0),
            Err(Error::GeometryMismatch(_))
        ));
    }
}
