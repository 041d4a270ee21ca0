//! Circumferential strain, structural integrity index and its relative form,
//! with the percentile summary used for reporting.
//!
//! Vertices whose tension is not positive (or whose curvature radius hit a
//! clamp, or whose displacement was sampled outside the field) are masked:
//! they keep a zero index value and are left out of means and percentiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LocalFrame;
use crate::numeric::{compensated_sum, sorted_quantile};
use crate::solver::{SurfaceField, Units};

/// Signed normal displacement (mm) and tangential magnitude (mm).
pub fn normal_displacement(vectors: &[[f64; 3]], frames: &[LocalFrame]) -> Result<(SurfaceField, SurfaceField)> {
    if vectors.len() != frames.len() {
        return Err(Error::FieldMismatch(format!("{} displacements for {} frames", vectors.len(), frames.len())));
    }
    let (normal, tangential): (Vec<f64>, Vec<f64>) = vectors
        .iter()
        .zip(frames)
        .map(|(u, f)| {
            let u = crate::numeric::Vec3::from(*u);
            let n = f.n();
            let un = u.dot(&n);
            (un, (u - n * un).norm())
        })
        .unzip();
    Ok((
        SurfaceField::new("u_normal", Units::Millimeter, normal)?,
        SurfaceField::new("u_tangential", Units::Millimeter, tangential)?,
    ))
}

/// `u_n / R`, signed.
pub fn circumferential_strain(u_n: &SurfaceField, radius: &[f64]) -> Result<SurfaceField> {
    if u_n.len() != radius.len() {
        return Err(Error::FieldMismatch(format!("{} displacements for {} radii", u_n.len(), radius.len())));
    }
    if let Some(v) = radius.iter().position(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParameter(format!("curvature radius {} at vertex {v} must be > 0", radius[v])));
    }
    SurfaceField::new(
        "strain_circ",
        Units::Dimensionless,
        u_n.values.iter().zip(radius).map(|(u, r)| u / r).collect(),
    )
}

/// Mask of vertices whose tension is not strictly positive.
pub fn nonpositive_tension_mask(tension: &SurfaceField) -> Vec<bool> {
    tension.values.iter().map(|t| !(*t > 0.0)).collect()
}

/// `strain / tension` (m/N) at unmasked vertices, zero at masked ones.
pub fn structural_integrity_index(strain: &SurfaceField, tension: &SurfaceField, mask: &[bool]) -> Result<SurfaceField> {
    if strain.len() != tension.len() || mask.len() != strain.len() {
        return Err(Error::FieldMismatch(format!(
            "strain {}, tension {}, mask {} lengths differ",
            strain.len(),
            tension.len(),
            mask.len()
        )));
    }
    let mut sii = Vec::with_capacity(strain.len());
    for v in 0..strain.len() {
        if mask[v] {
            sii.push(0.0);
            continue;
        }
        let t = tension.values[v];
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("tension {t} at unmasked vertex {v} must be > 0")));
        }
        sii.push(strain.values[v] / t);
    }
    SurfaceField::new("sii", Units::MeterPerNewton, sii)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RsiiMode {
    /// `|SII| / mean(|SII|)`.
    #[default]
    Absolute,
    /// `SII / mean(SII)`, the literal ratio without absolute values.
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanWeighting {
    #[default]
    Vertex,
    Area,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RsiiOptions {
    pub mode: RsiiMode,
    pub weighting: MeanWeighting,
}

/// SII normalized by its mean over unmasked vertices. `areas` is required
/// for area weighting.
pub fn relative_sii(sii: &SurfaceField, mask: &[bool], options: &RsiiOptions, areas: Option<&[f64]>) -> Result<SurfaceField> {
    if mask.len() != sii.len() {
        return Err(Error::FieldMismatch(format!("{} mask flags for {} values", mask.len(), sii.len())));
    }
    let value = |s: f64| match options.mode {
        RsiiMode::Absolute => s.abs(),
        RsiiMode::Signed => s,
    };
    let kept = || (0..sii.len()).filter(|&v| !mask[v]);
    let mean = match options.weighting {
        MeanWeighting::Vertex => {
            let n = kept().count();
            compensated_sum(kept().map(|v| value(sii.values[v]))) / n.max(1) as f64
        }
        MeanWeighting::Area => {
            let a = areas.ok_or_else(|| Error::InvalidParameter("area weighting needs vertex areas".into()))?;
            if a.len() != sii.len() {
                return Err(Error::FieldMismatch(format!("{} areas for {} values", a.len(), sii.len())));
            }
            compensated_sum(kept().map(|v| a[v] * value(sii.values[v]))) / compensated_sum(kept().map(|v| a[v]))
        }
    };
    if !(mean.abs() > 0.0) || !mean.is_finite() {
        return Err(Error::Degenerate(format!("mean SII is {mean}; relative index undefined")));
    }
    SurfaceField::new(
        "rsii",
        Units::Dimensionless,
        (0..sii.len()).map(|v| if mask[v] { 0.0 } else { value(sii.values[v]) / mean }).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    /// 99th percentile of |value|.
    pub p99_abs: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Per-field summaries in SI units (N/m, 1, m/N, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileReport {
    pub tension: FieldSummary,
    pub strain: FieldSummary,
    pub sii: FieldSummary,
    pub rsii: FieldSummary,
    pub vertices_used: usize,
}

impl PercentileReport {
    pub fn t_o(&self) -> f64 {
        self.tension.p99_abs
    }

    pub fn eps_o(&self) -> f64 {
        self.strain.p99_abs
    }

    pub fn sii_o(&self) -> f64 {
        self.sii.p99_abs
    }

    pub fn rsii_o(&self) -> f64 {
        self.rsii.p99_abs
    }
}

/// 99th percentile (linear interpolation between order statistics) of the
/// absolute values, plus mean and standard deviation.
pub fn summarize(values: &[f64], mask: &[bool]) -> FieldSummary {
    let kept: Vec<f64> = values.iter().zip(mask).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
    if kept.is_empty() {
        return FieldSummary {
            p99_abs: 0.0,
            mean: 0.0,
            std: 0.0,
        };
    }
    let n = kept.len() as f64;
    let mean = compensated_sum(kept.iter().copied()) / n;
    let var = compensated_sum(kept.iter().map(|v| (v - mean) * (v - mean))) / n;
    let mut abs: Vec<f64> = kept.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    FieldSummary {
        p99_abs: sorted_quantile(&abs, 0.99),
        mean,
        std: var.sqrt(),
    }
}

pub fn percentile_report(strain: &SurfaceField, tension: &SurfaceField, sii: &SurfaceField, rsii: &SurfaceField, mask: &[bool]) -> PercentileReport {
    PercentileReport {
        tension: summarize(&tension.values, mask),
        strain: summarize(&strain.values, mask),
        sii: summarize(&sii.values, mask),
        rsii: summarize(&rsii.values, mask),
        vertices_used: mask.iter().filter(|m| !**m).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MaskCounts {
    pub nonpositive_tension: usize,
    pub clamped_curvature: usize,
    pub outside_field: usize,
    /// Vertices masked for any reason.
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexBundle {
    pub strain: SurfaceField,
    pub tension: SurfaceField,
    pub sii: SurfaceField,
    pub rsii: SurfaceField,
    pub mask: Vec<bool>,
    pub masked: MaskCounts,
    pub report: PercentileReport,
    /// Mean SII vanished; `rsii` is all zeros.
    pub rsii_degenerate: bool,
}

/// Strain, SII, RSII and report from per-vertex normal displacement (mm),
/// curvature radius (mm), tension (N/m) and flags.
pub fn compute_indices(
    u_n: &SurfaceField,
    radius: &[f64],
    clamped_curvature: &[bool],
    outside_field: &[bool],
    tension: &SurfaceField,
    options: &RsiiOptions,
    areas: Option<&[f64]>,
) -> Result<IndexBundle> {
    let n = u_n.len();
    if [radius.len(), clamped_curvature.len(), outside_field.len(), tension.len()].iter().any(|&l| l != n) {
        return Err(Error::FieldMismatch("index inputs have different vertex counts".into()));
    }
    let strain = circumferential_strain(u_n, radius)?;
    let bad_tension = nonpositive_tension_mask(tension);
    let mask: Vec<bool> = (0..n).map(|v| bad_tension[v] || clamped_curvature[v] || outside_field[v]).collect();
    let count = |f: &[bool]| f.iter().filter(|x| **x).count();
    let masked = MaskCounts {
        nonpositive_tension: count(&bad_tension),
        clamped_curvature: count(clamped_curvature),
        outside_field: count(outside_field),
        total: count(&mask),
    };
    let sii = structural_integrity_index(&strain, tension, &mask)?;
    let (rsii, rsii_degenerate) = match relative_sii(&sii, &mask, options, areas) {
        Ok(r) => (r, false),
        Err(Error::Degenerate(_)) => (SurfaceField::new("rsii", Units::Dimensionless, vec![0.0; n])?, true),
        Err(e) => return Err(e),
    };
    let report = percentile_report(&strain, tension, &sii, &rsii, &mask);
    Ok(IndexBundle {
        strain,
        tension: tension.clone(),
        sii,
        rsii,
        mask,
        masked,
        report,
        rsii_degenerate,
    })
}
