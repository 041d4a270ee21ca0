//! Coarse-to-fine ADMM for `min_u SSD(u) + lambda * TV(u)` with the split
//! `z = grad u`:
//!
//! * u-step: preconditioned gradient descent with Armijo backtracking on
//!   `SSD(u) + rho/2 |grad u - z + w|^2`,
//! * z-step: group shrinkage of the 9-component Jacobian stack,
//! * w-step: scaled dual ascent `w += grad u - z`.
//!
//! Each outer iteration is safeguarded: if the exact energy went up, the
//! primal step is shortened toward the previous iterate (or dropped), so the
//! recorded trace is non-increasing.

use serde::{Deserialize, Serialize};

use super::energy::{data_residuals, data_sum, forward_gradient, gradient_adjoint, jac_norm, tv_sum, Jacobian};
use super::field::DisplacementField;
use super::{pyramid, RegConfig};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::volume::VoxelGrid;

const MIN_ITERATIONS: usize = 5;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLog {
    pub level: usize,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Exact energy before the first and after every outer iteration.
    pub energy: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Outer iterations whose primal step had to be dropped entirely.
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationLog {
    pub config: RegConfig,
    /// Coarsest level first.
    pub levels: Vec<LevelLog>,
}

pub fn register(fixed: &VoxelGrid, moving: &VoxelGrid, config: &RegConfig) -> Result<DisplacementField> {
    register_with_log(fixed, moving, config).map(|(f, _)| f)
}

pub fn register_with_log(
    fixed: &VoxelGrid,
    moving: &VoxelGrid,
    config: &RegConfig,
) -> Result<(DisplacementField, RegistrationLog)> {
    config.validate()?;
    if fixed.data().iter().chain(moving.data()).any(|v| !v.is_finite()) {
        return Err(Error::Registration("input images contain NaN or infinite values".into()));
    }
    let (flo, fhi) = fixed.extent();
    let (mlo, mhi) = moving.extent();
    if (0..3).any(|a| fhi[a] < mlo[a] || mhi[a] < flo[a]) {
        return Err(Error::Registration("fixed and moving images do not overlap physically".into()));
    }

    let fixed_levels = pyramid::build(fixed, config.pyramid_levels);
    let moving_levels = pyramid::build(moving, fixed_levels.len());
    let mut field: Option<DisplacementField> = None;
    let mut logs = Vec::new();
    for level in (0..fixed_levels.len()).rev() {
        let f = &fixed_levels[level];
        let m = &moving_levels[level.min(moving_levels.len() - 1)];
        let init = match field.take() {
            None => DisplacementField::zeros_like(f),
            Some(coarse) => coarse.resample_to(f),
        };
        let (solved, log) = solve_level(f, m, init, config, level);
        logs.push(log);
        field = Some(solved);
    }
    Ok((
        field.expect("at least one level"),
        RegistrationLog {
            config: config.clone(),
            levels: logs,
        },
    ))
}

struct Problem<'a> {
    fixed: &'a VoxelGrid,
    moving: &'a VoxelGrid,
    dims: [usize; 3],
    spacing: [f64; 3],
    lambda: f64,
    rho: f64,
}

impl Problem<'_> {
    /// Exact energy per unit voxel volume.
    fn energy(&self, u: &[[f64; 3]]) -> (f64, Vec<Jacobian>) {
        let jac = forward_gradient(u, self.dims, self.spacing);
        let e = data_sum(self.fixed, self.moving, u) + self.lambda * tv_sum(&jac);
        (e, jac)
    }

    fn penalty(&self, jac: &[Jacobian], z: &[Jacobian], w: &[Jacobian]) -> f64 {
        0.5 * self.rho
            * compensated_sum(jac.iter().zip(z).zip(w).map(|((g, zz), ww)| {
                (0..9).map(|i| (g[i] - zz[i] + ww[i]).powi(2)).sum::<f64>()
            }))
    }

    fn subproblem(&self, u: &[[f64; 3]], z: &[Jacobian], w: &[Jacobian]) -> f64 {
        let jac = forward_gradient(u, self.dims, self.spacing);
        data_sum(self.fixed, self.moving, u) + self.penalty(&jac, z, w)
    }

    /// One preconditioned, backtracked descent step on the u-subproblem.
    /// Returns the trial step length that was accepted (0 if none).
    fn descent_step(&self, u: &mut Vec<[f64; 3]>, z: &[Jacobian], w: &[Jacobian], alpha0: f64) -> f64 {
        let residuals = data_residuals(self.fixed, self.moving, u);
        let jac = forward_gradient(u, self.dims, self.spacing);
        let q: Vec<Jacobian> = jac
            .iter()
            .zip(z)
            .zip(w)
            .map(|((g, zz), ww)| std::array::from_fn(|i| g[i] - zz[i] + ww[i]))
            .collect();
        let current = compensated_sum(residuals.iter().map(|(r, _)| r * r))
            + 0.5 * self.rho * compensated_sum(q.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>()));
        let dtq = gradient_adjoint(&q, self.dims, self.spacing);
        let lap_bound: f64 = self.spacing.iter().map(|s| 4.0 / (s * s)).sum();

        let mut direction = vec![[0.0; 3]; u.len()];
        let mut decrease = 0.0;
        for (idx, ((r, gm), dq)) in residuals.iter().zip(&dtq).enumerate() {
            let precond = 2.0 * (gm[0] * gm[0] + gm[1] * gm[1] + gm[2] * gm[2]) + self.rho * lap_bound;
            let d = &mut direction[idx];
            for c in 0..3 {
                let g = -2.0 * r * gm[c] + self.rho * dq[c];
                d[c] = -g / precond;
                decrease += g * g / precond;
            }
        }
        if decrease == 0.0 {
            return alpha0;
        }

        let mut alpha = alpha0;
        for _ in 0..MAX_BACKTRACK {
            let trial: Vec<[f64; 3]> = u
                .iter()
                .zip(&direction)
                .map(|(v, d)| [v[0] + alpha * d[0], v[1] + alpha * d[1], v[2] + alpha * d[2]])
                .collect();
            if self.subproblem(&trial, z, w) <= current - ARMIJO * alpha * decrease {
                *u = trial;
                return alpha;
            }
            alpha *= 0.5;
        }
        0.0
    }
}

fn shrink(v: &Jacobian, threshold: f64) -> Jacobian {
    let n = jac_norm(v);
    if n <= threshold {
        [0.0; 9]
    } else {
        let s = 1.0 - threshold / n;
        std::array::from_fn(|i| v[i] * s)
    }
}

fn solve_level(
    fixed: &VoxelGrid,
    moving: &VoxelGrid,
    init: DisplacementField,
    config: &RegConfig,
    level: usize,
) -> (DisplacementField, LevelLog) {
    let problem = Problem {
        fixed,
        moving,
        dims: fixed.dims(),
        spacing: fixed.spacing(),
        lambda: config.lambda_tv,
        rho: config.admm_penalty,
    };
    let vol = fixed.voxel_volume();
    let mut field = init;
    let mut u: Vec<[f64; 3]> = field.vectors().to_vec();
    let (mut e_prev, jac0) = problem.energy(&u);
    let mut z = jac0;
    let mut w: Vec<Jacobian> = vec![[0.0; 9]; u.len()];
    let mut trace = vec![vol * e_prev];
    let mut alpha: f64 = 1.0;
    let mut converged = false;
    let mut rejected = 0;
    let mut iterations = 0;
    let threshold = problem.lambda / problem.rho;

    for it in 0..config.iterations_per_level << level {
        iterations = it + 1;
        let u_old = u.clone();
        for _ in 0..config.inner_steps {
            let accepted = problem.descent_step(&mut u, &z, &w, (2.0 * alpha).min(1.0));
            alpha = if accepted > 0.0 { accepted } else { (alpha * 0.25).max(1e-6) };
        }
        let (mut e, mut jac) = problem.energy(&u);
        if e > e_prev {
            let mut beta = 0.5;
            let mut accepted = false;
            for _ in 0..8 {
                let cand: Vec<[f64; 3]> = u_old
                    .iter()
                    .zip(&u)
                    .map(|(a, b)| std::array::from_fn(|c| a[c] + beta * (b[c] - a[c])))
                    .collect();
                let (ec, jc) = problem.energy(&cand);
                if ec <= e_prev {
                    u = cand;
                    e = ec;
                    jac = jc;
                    accepted = true;
                    break;
                }
                beta *= 0.5;
            }
            if !accepted {
                u = u_old;
                e = e_prev;
                jac = forward_gradient(&u, problem.dims, problem.spacing);
                rejected += 1;
            }
        }
        for ((zz, ww), g) in z.iter_mut().zip(w.iter_mut()).zip(&jac) {
            let v: Jacobian = std::array::from_fn(|i| g[i] + ww[i]);
            *zz = shrink(&v, threshold);
            for i in 0..9 {
                ww[i] += g[i] - zz[i];
            }
        }
        trace.push(vol * e);
        let rel = if e_prev > 0.0 { (e_prev - e) / e_prev } else { 0.0 };
        e_prev = e;
        if e == 0.0 || (it + 1 >= MIN_ITERATIONS && rel < config.convergence_tol) {
            converged = true;
            break;
        }
    }

    field.vectors_mut().copy_from_slice(&u);
    (
        field,
        LevelLog {
            level,
            dims: problem.dims,
            spacing: problem.spacing,
            energy: trace,
            iterations,
            converged,
            rejected_steps: rejected,
        },
    )
}
