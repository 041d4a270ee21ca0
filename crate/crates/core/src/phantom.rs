//! Synthetic systolic/diastolic image pairs with closed-form ground truth.
//!
//! Tubes (cylinder and fusiform) are axis-aligned along z and centered on
//! the physical origin; the sphere is centered on the origin. The lumen
//! (label 2) has radius `R(z)`, the wall (label 1) occupies
//! `R(z) <= r < R(z) + wall_thickness`. Intensities are 300 in the lumen,
//! 100 in the wall and 0 outside, with each interface blurred by a Gaussian
//! edge profile (an `erf` step) of width `smoothing_sigma`.
//!
//! The truth displacement is a radial dilation: `u(x) = inflation * w(z) *
//! (x - axis)` for tubes, `u(x) = inflation * (x - center)` for the sphere.
//! `w` is 1 over the middle of the tube and ramps linearly to 0 at the
//! z-ends. The moving image is generated through the exact inverse map, so
//! `moving(x + u(x)) == fixed(x)` holds pointwise before resampling.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registration::DisplacementField;
use crate::volume::{LabelMap, VoxelGrid, BACKGROUND, LUMEN, WALL};

pub const LUMEN_INTENSITY: f64 = 300.0;
pub const WALL_INTENSITY: f64 = 100.0;

/// Fraction of the tube length over which the displacement ramps to zero at
/// each end.
pub const END_RAMP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Tube,
    Sphere,
}

/// Closed-form values for phantoms that have them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticTruth {
    /// Lumen (inner wall) radius, mm; the surface the pressure acts on.
    pub radius: f64,
    pub wall_thickness: f64,
    /// Laplace-law factor: t = factor * p * radius (1 tube, 1/2 sphere).
    pub tension_factor: f64,
    pub strain_circ: f64,
}

impl AnalyticTruth {
    /// Membrane tension in N/m for a pressure in Pa.
    pub fn tension(&self, pressure_pa: f64) -> f64 {
        self.tension_factor * pressure_pa * self.radius * 1e-3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomInfo {
    pub shape: Shape,
    pub center: [f64; 3],
    /// Tube length along z (0 for the sphere).
    pub length: f64,
    pub wall_thickness: f64,
    pub inflation: f64,
    /// Largest lumen radius, mm.
    pub max_radius: f64,
}

impl PhantomInfo {
    pub fn max_diameter(&self) -> f64 {
        2.0 * self.max_radius
    }
}

#[derive(Debug, Clone)]
pub struct PhantomCase {
    /// Systolic frame.
    pub fixed_image: VoxelGrid,
    /// Diastolic frame.
    pub moving_image: VoxelGrid,
    /// Segmentation of the fixed geometry.
    pub labels: LabelMap,
    /// Fixed to moving, mm.
    pub truth_displacement: DisplacementField,
    pub analytic: Option<AnalyticTruth>,
    pub info: PhantomInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CylinderParams {
    pub radius: f64,
    pub wall_thickness: f64,
    pub length: f64,
    pub spacing: f64,
    pub inflation: f64,
    pub smoothing_sigma: f64,
}

impl Default for CylinderParams {
    fn default() -> Self {
        Self {
            radius: 25.0,
            wall_thickness: 1.5,
            length: 60.0,
            spacing: 0.75,
            inflation: 0.03,
            smoothing_sigma: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereParams {
    pub radius: f64,
    pub wall_thickness: f64,
    pub spacing: f64,
    pub inflation: f64,
    pub smoothing_sigma: f64,
}

impl Default for SphereParams {
    fn default() -> Self {
        Self {
            radius: 25.0,
            wall_thickness: 1.5,
            spacing: 0.75,
            inflation: 0.03,
            smoothing_sigma: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusiformParams {
    pub base_radius: f64,
    pub bulge_amplitude: f64,
    pub bulge_sigma: f64,
    pub length: f64,
    pub spacing: f64,
    pub inflation: f64,
    pub wall_thickness: f64,
    pub smoothing_sigma: f64,
}

impl Default for FusiformParams {
    fn default() -> Self {
        Self {
            base_radius: 10.0,
            bulge_amplitude: 8.0,
            bulge_sigma: 10.0,
            length: 60.0,
            spacing: 0.75,
            inflation: 0.03,
            wall_thickness: 1.5,
            smoothing_sigma: 0.75,
        }
    }
}

impl From<&CylinderParams> for FusiformParams {
    fn from(c: &CylinderParams) -> Self {
        Self {
            base_radius: c.radius,
            bulge_amplitude: 0.0,
            bulge_sigma: 1.0,
            length: c.length,
            spacing: c.spacing,
            inflation: c.inflation,
            wall_thickness: c.wall_thickness,
            smoothing_sigma: c.smoothing_sigma,
        }
    }
}

/// Phantom recipe, as accepted by the pipeline config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomSpec {
    Cylinder(CylinderParams),
    Sphere(SphereParams),
    Fusiform(FusiformParams),
}

impl PhantomSpec {
    pub fn generate(&self) -> Result<PhantomCase> {
        match self {
            PhantomSpec::Cylinder(p) => make_cylinder_phantom(p),
            PhantomSpec::Sphere(p) => make_sphere_phantom(p),
            PhantomSpec::Fusiform(p) => make_fusiform_phantom(p),
        }
    }
}

/// Smoothed unit step of a signed distance (positive inside).
fn edge(distance: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        0.5 * libm::erfc(-distance / (sigma * std::f64::consts::SQRT_2))
    } else if distance > 0.0 {
        1.0
    } else if distance == 0.0 {
        0.5
    } else {
        0.0
    }
}

fn intensity(inner_distance: f64, thickness: f64, sigma: f64) -> f32 {
    let lumen = edge(inner_distance, sigma);
    let outer = edge(inner_distance + thickness, sigma);
    ((LUMEN_INTENSITY - WALL_INTENSITY) * lumen + WALL_INTENSITY * outer) as f32
}

fn label(inner_distance: f64, thickness: f64) -> f32 {
    if inner_distance > 0.0 {
        LUMEN as f32
    } else if inner_distance + thickness > 0.0 {
        WALL as f32
    } else {
        BACKGROUND as f32
    }
}

fn check_common(spacing: f64, thickness: f64, inflation: f64, sigma: f64) -> Result<()> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidParameter("phantom spacing must be > 0".into()));
    }
    if !(thickness > 0.0) {
        return Err(Error::InvalidParameter("phantom wall thickness must be > 0".into()));
    }
    if !(0.0..=0.2).contains(&inflation) {
        return Err(Error::InvalidParameter(format!("inflation {inflation} outside [0, 0.2]")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter("smoothing sigma must be >= 0".into()));
    }
    if thickness < 2.0 * spacing {
        warn!("wall thickness {thickness} mm is resolved by fewer than 2 voxels at spacing {spacing} mm");
    }
    Ok(())
}

/// Voxel count and origin of an axis centered on zero that covers
/// `[-half, half]`.
fn centered_axis(half: f64, spacing: f64) -> (usize, f64) {
    let n = (half / spacing).ceil() as usize;
    (2 * n + 1, -(n as f64) * spacing)
}

fn tube_envelope(z: f64, length: f64) -> f64 {
    let ramp = END_RAMP_FRACTION * length;
    ((0.5 * length - z.abs()) / ramp).clamp(0.0, 1.0)
}

fn margin(spacing: f64, sigma: f64) -> f64 {
    3.0 * sigma + 4.0 * spacing
}

pub fn make_cylinder_phantom(params: &CylinderParams) -> Result<PhantomCase> {
    if !(params.radius > 2.0 * params.wall_thickness) {
        return Err(Error::InvalidParameter(format!(
            "radius {} must exceed twice the wall thickness {}",
            params.radius, params.wall_thickness
        )));
    }
    let mut case = build_tube(&FusiformParams::from(params))?;
    case.analytic = Some(AnalyticTruth {
        radius: params.radius,
        wall_thickness: params.wall_thickness,
        tension_factor: 1.0,
        strain_circ: params.inflation,
    });
    Ok(case)
}

pub fn make_fusiform_phantom(params: &FusiformParams) -> Result<PhantomCase> {
    if params.base_radius + params.bulge_amplitude > params.length / 3.0 {
        return Err(Error::InvalidParameter(format!(
            "base radius + bulge ({}) exceeds a third of the length ({})",
            params.base_radius + params.bulge_amplitude,
            params.length
        )));
    }
    if params.bulge_amplitude < 0.0 || !(params.bulge_sigma > 0.0) {
        return Err(Error::InvalidParameter("bulge amplitude must be >= 0 and bulge sigma > 0".into()));
    }
    build_tube(params)
}

fn build_tube(p: &FusiformParams) -> Result<PhantomCase> {
    check_common(p.spacing, p.wall_thickness, p.inflation, p.smoothing_sigma)?;
    if !(p.base_radius > 0.0) || !(p.length > 0.0) {
        return Err(Error::InvalidParameter("tube radius and length must be positive".into()));
    }
    let radius_at = |z: f64| p.base_radius + p.bulge_amplitude * (-z * z / (2.0 * p.bulge_sigma * p.bulge_sigma)).exp();
    let max_radius = p.base_radius + p.bulge_amplitude;
    let half_xy = (max_radius + p.wall_thickness) * (1.0 + p.inflation) + margin(p.spacing, p.smoothing_sigma);
    let (nxy, oxy) = centered_axis(half_xy, p.spacing);
    let nz = (p.length / p.spacing).round() as usize + 1;
    if nz < 4 || nxy < 4 {
        return Err(Error::InvalidParameter("phantom grid is degenerate".into()));
    }
    let oz = -0.5 * (nz - 1) as f64 * p.spacing;
    let dims = [nxy, nxy, nz];
    let spacing = [p.spacing; 3];
    let origin = [oxy, oxy, oz];
    let h = p.wall_thickness;
    let sigma = p.smoothing_sigma;
    let a = p.inflation;

    let fixed = VoxelGrid::from_fn(dims, spacing, origin, |x| {
        let r = x[0].hypot(x[1]);
        intensity(radius_at(x[2]) - r, h, sigma)
    })?;
    let moving = VoxelGrid::from_fn(dims, spacing, origin, |y| {
        let scale = 1.0 + a * tube_envelope(y[2], p.length);
        let r = y[0].hypot(y[1]) / scale;
        intensity(radius_at(y[2]) - r, h, sigma)
    })?;
    let labels = LabelMap::new(VoxelGrid::from_fn(dims, spacing, origin, |x| {
        label(radius_at(x[2]) - x[0].hypot(x[1]), h)
    })?)?;
    let truth = DisplacementField::from_fn(&fixed, |x| {
        let s = a * tube_envelope(x[2], p.length);
        [s * x[0], s * x[1], 0.0]
    });
    Ok(PhantomCase {
        fixed_image: fixed,
        moving_image: moving,
        labels,
        truth_displacement: truth,
        analytic: None,
        info: PhantomInfo {
            shape: Shape::Tube,
            center: [0.0; 3],
            length: p.length,
            wall_thickness: h,
            inflation: a,
            max_radius,
        },
    })
}

pub fn make_sphere_phantom(p: &SphereParams) -> Result<PhantomCase> {
    check_common(p.spacing, p.wall_thickness, p.inflation, p.smoothing_sigma)?;
    if !(p.radius > 2.0 * p.wall_thickness) {
        return Err(Error::InvalidParameter(format!(
            "radius {} must exceed twice the wall thickness {}",
            p.radius, p.wall_thickness
        )));
    }
    let half = (p.radius + p.wall_thickness) * (1.0 + p.inflation) + margin(p.spacing, p.smoothing_sigma);
    let (n, o) = centered_axis(half, p.spacing);
    let dims = [n; 3];
    let spacing = [p.spacing; 3];
    let origin = [o; 3];
    let h = p.wall_thickness;
    let sigma = p.smoothing_sigma;
    let a = p.inflation;
    let norm = |x: [f64; 3]| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();

    let fixed = VoxelGrid::from_fn(dims, spacing, origin, |x| intensity(p.radius - norm(x), h, sigma))?;
    let moving = VoxelGrid::from_fn(dims, spacing, origin, |y| intensity(p.radius - norm(y) / (1.0 + a), h, sigma))?;
    let labels = LabelMap::new(VoxelGrid::from_fn(dims, spacing, origin, |x| label(p.radius - norm(x), h))?)?;
    let truth = DisplacementField::from_fn(&fixed, |x| [a * x[0], a * x[1], a * x[2]]);
    Ok(PhantomCase {
        fixed_image: fixed,
        moving_image: moving,
        labels,
        truth_displacement: truth,
        analytic: Some(AnalyticTruth {
            radius: p.radius,
            wall_thickness: h,
            tension_factor: 0.5,
            strain_circ: a,
        }),
        info: PhantomInfo {
            shape: Shape::Sphere,
            center: [0.0; 3],
            length: 0.0,
            wall_thickness: h,
            inflation: a,
            max_radius: p.radius,
        },
    })
}
