//! Dense deformable registration with isotropic total-variation
//! regularization, solved coarse to fine by ADMM.

mod admm;
mod energy;
mod field;
mod pyramid;

pub use admm::{register, register_with_log, LevelLog, RegistrationLog};
pub use energy::{
    energy_terms, forward_gradient, gradient_adjoint, registration_energy_and_gradient, surrogate_energy, EnergyTerms,
    Jacobian, TV_EPSILON,
};
pub use field::{warp, DisplacementField};
pub use pyramid::downsample;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegConfig {
    /// TV weight, intensity^2 per unit displacement gradient.
    pub lambda_tv: f64,
    pub pyramid_levels: usize,
    /// ADMM outer iterations at the finest level; each coarser level
    /// gets twice the budget of the one below it.
    pub iterations_per_level: usize,
    /// Gradient steps on the data subproblem per outer iteration.
    pub inner_steps: usize,
    pub admm_penalty: f64,
    /// Stop a level once the relative energy decrease falls below this.
    pub convergence_tol: f64,
    /// Recorded for provenance; the optimizer itself draws no random numbers.
    pub seed: u64,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            lambda_tv: 200.0,
            pyramid_levels: 3,
            iterations_per_level: 60,
            inner_steps: 3,
            admm_penalty: 4000.0,
            convergence_tol: 1e-5,
            seed: 0,
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("registration config: {m}")));
        if !(self.lambda_tv >= 0.0) || !self.lambda_tv.is_finite() {
            return bad("lambda_tv must be >= 0");
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be >= 1");
        }
        if self.iterations_per_level == 0 || self.inner_steps == 0 {
            return bad("iteration counts must be >= 1");
        }
        if !(self.admm_penalty > 0.0) {
            return bad("admm_penalty must be > 0");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be >= 0");
        }
        Ok(())
    }
}
