//! Stage orchestration with on-disk artifacts.
//!
//! Every stage reads its inputs from the output directory and writes its
//! results there, so a run can resume from any stage and a stage sees
//! exactly what a fresh process would see. Stages, in order:
//!
//! | stage      | reads                          | writes |
//! |------------|--------------------------------|--------|
//! | `input`    | phantom spec or image paths    | `fixed.mhd`, `moving.mhd`, `labels.mhd`, `phantom.json` |
//! | `surface`  | `labels.mhd`                   | `surface.vtk` |
//! | `register` | `fixed.mhd`, `moving.mhd`      | `displacement_{x,y,z}.mhd`, `registration_log.json` |
//! | `tension`  | `surface.vtk`                  | `tension.vtk`, `solver_log.json` |
//! | `indices`  | surface, displacement, tension | `indices.vtk`, `report.json` |
//!
//! `manifest.json` records the version, config hash, seeds, timestamps and
//! an artifact digest list; it is the only file that differs between
//! identical runs.

mod report;
mod vtk;

pub use report::{export_report_json, read_report_json, FieldReport, Report, VertexCounts};
pub use vtk::{export_vtk, format_polydata, parse_polydata, read_polydata, surface_polydata, write_polydata, PolyData};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{
    curvature_radii, extract_surface_of, interpolate_at_vertices, local_frames, GeometryParams, LocalFrame, SmoothingParams,
    TriangleSurface,
};
use crate::indices::{compute_indices, normal_displacement, IndexBundle, MeanWeighting, RsiiOptions};
use crate::phantom::{CylinderParams, PhantomSpec};
use crate::registration::{register_with_log, DisplacementField, RegConfig};
use crate::solver::{build_wall_mesh, solve_elasticity_with, uniform_stress_average, wall_tension, Materials, SolverParams, SurfaceField, Units};
use crate::volume::{load_image, load_labels, save_labels, save_volume, LUMEN, WALL};

pub const MANIFEST: &str = "manifest.json";
const LOCKFILE: &str = ".rsii.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Phantom(PhantomSpec),
    Images { fixed: PathBuf, moving: PathBuf, labels: PathBuf },
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec::Phantom(PhantomSpec::Cylinder(CylinderParams::default()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceParams {
    /// Label codes whose union is meshed; the default is the outer wall.
    pub codes: Vec<u8>,
    /// Iso level on the smoothed indicator, in (0, 1).
    pub iso: f64,
    pub smoothing: SmoothingParams,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        Self {
            codes: vec![WALL, LUMEN],
            iso: 0.5,
            smoothing: SmoothingParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSpec,
    pub output_dir: PathBuf,
    pub pressure_kpa: f64,
    pub wall_thickness_mm: f64,
    pub layers: usize,
    /// Innermost layers meshed with the thrombus material.
    pub ilt_layers: usize,
    /// Vessel axis for the circumferential tension component; the local
    /// first tangent is used when absent.
    pub vessel_axis: Option<[f64; 3]>,
    pub surface: SurfaceParams,
    pub geometry: GeometryParams,
    pub registration: RegConfig,
    pub materials: Materials,
    pub solver: SolverParams,
    pub rsii: RsiiOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: InputSpec::default(),
            output_dir: PathBuf::from("rsii-output"),
            pressure_kpa: 13.0,
            wall_thickness_mm: 1.5,
            layers: 2,
            ilt_layers: 0,
            vessel_axis: None,
            surface: SurfaceParams::default(),
            geometry: GeometryParams::default(),
            registration: RegConfig::default(),
            materials: Materials::default(),
            solver: SolverParams::default(),
            rsii: RsiiOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn pressure_pa(&self) -> f64 {
        self.pressure_kpa * 1e3
    }

    /// Checks values; with `check_files`, also that input images exist.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.pressure_kpa > 0.0) || !self.pressure_kpa.is_finite() {
            return bad(format!("pressure_kpa must be positive, got {}", self.pressure_kpa));
        }
        if !(self.wall_thickness_mm > 0.0) || !self.wall_thickness_mm.is_finite() {
            return bad(format!("wall_thickness_mm must be positive, got {}", self.wall_thickness_mm));
        }
        if self.layers < 2 {
            return bad(format!("layers must be >= 2, got {}", self.layers));
        }
        if self.ilt_layers > self.layers {
            return bad(format!("ilt_layers {} exceeds layers {}", self.ilt_layers, self.layers));
        }
        if let Some(a) = self.vessel_axis {
            if !a.iter().all(|v| v.is_finite()) || a.iter().all(|v| *v == 0.0) {
                return bad("vessel_axis must be a finite nonzero vector".into());
            }
        }
        if self.surface.codes.is_empty() || self.surface.codes.iter().any(|c| ![WALL, LUMEN].contains(c)) {
            return bad(format!("surface codes {:?} must be a nonempty subset of [1, 2]", self.surface.codes));
        }
        if !(self.surface.iso > 0.0 && self.surface.iso < 1.0) {
            return bad(format!("surface iso {} must lie in (0, 1)", self.surface.iso));
        }
        if self.geometry.neighborhood_k < 6 {
            return bad("geometry neighborhood_k must be >= 6".into());
        }
        if let Some(r) = self.geometry.neighborhood_radius {
            if !(r > 0.0) {
                return bad("geometry neighborhood_radius must be positive".into());
            }
        }
        if !(self.geometry.radius_edge_factor > 0.0) {
            return bad("geometry radius_edge_factor must be positive".into());
        }
        if !(self.geometry.mlesac.inlier_tol > 0.0) || self.geometry.mlesac.trials == 0 {
            return bad("mlesac needs trials >= 1 and inlier_tol > 0".into());
        }
        if !(self.solver.tolerance > 0.0) {
            return bad("solver tolerance must be positive".into());
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.registration.validate().map_err(wrap)?;
        self.materials.validate().map_err(wrap)?;
        if check_files {
            if let InputSpec::Images { fixed, moving, labels } = &self.input {
                for p in [fixed, moving, labels] {
                    if !p.is_file() {
                        return bad(format!("input file {} does not exist", p.display()));
                    }
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the configuration without the output directory, so the
    /// same run in two places hashes the same.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex(&Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Surface,
    Register,
    Tension,
    Indices,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Input, Stage::Surface, Stage::Register, Stage::Tension, Stage::Indices];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Surface => "surface",
            Stage::Register => "register",
            Stage::Tension => "tension",
            Stage::Indices => "indices",
        }
    }

    /// Files this stage writes.
    pub fn artifacts(self) -> &'static [&'static str] {
        match self {
            Stage::Input => &["fixed.mhd", "fixed.raw", "moving.mhd", "moving.raw", "labels.mhd", "labels.raw", "phantom.json"],
            Stage::Surface => &["surface.vtk"],
            Stage::Register => &[
                "displacement_x.mhd",
                "displacement_x.raw",
                "displacement_y.mhd",
                "displacement_y.raw",
                "displacement_z.mhd",
                "displacement_z.raw",
                "registration_log.json",
            ],
            Stage::Tension => &["tension.vtk", "solver_log.json"],
            Stage::Indices => &["indices.vtk", "report.json"],
        }
    }

    pub fn run(self, config: &PipelineConfig, dir: &Path) -> Result<()> {
        let result = match self {
            Stage::Input => stage_input(config, dir),
            Stage::Surface => stage_surface(config, dir),
            Stage::Register => stage_register(config, dir),
            Stage::Tension => stage_tension(config, dir),
            Stage::Indices => stage_indices(config, dir).map(|_| ()),
        };
        result.map_err(|e| Error::Stage {
            stage: self.name().into(),
            source: Box::new(e),
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}; expected one of input, surface, register, tension, indices")))
    }
}

/// Exclusive claim on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCKFILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub mlesac: u64,
    pub registration: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub stages_run: Vec<Stage>,
    pub status: String,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
    /// File name to SHA-256 for every artifact present at the end.
    pub artifacts: Vec<(String, String)>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// SHA-256 of every known artifact present in `dir`, in stage order.
pub fn artifact_digests(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for stage in Stage::ALL {
        for name in stage.artifacts() {
            let path = dir.join(name);
            if path.is_file() {
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                out.push((name.to_string(), hex(&Sha256::digest(&bytes))));
            }
        }
    }
    Ok(out)
}

/// Runs the stages from `from` (default: the first) to the end.
pub fn run_pipeline(config: &PipelineConfig, from: Option<Stage>) -> Result<Report> {
    config.validate(from.map_or(true, |s| s == Stage::Input))?;
    let dir = config.output_dir.as_path();
    let _lock = DirLock::acquire(dir)?;
    let hash = config.hash();
    if from.is_some_and(|s| s != Stage::Input) {
        match Manifest::load(dir) {
            Ok(m) if m.config_hash != hash => warn!("resuming over artifacts written with config {}", m.config_hash),
            Ok(_) => {}
            Err(_) => warn!("no readable manifest in {}; resuming on the files present", dir.display()),
        }
    }
    let started = now();
    let mut stages_run = Vec::new();
    let mut failure = None;
    for stage in Stage::ALL.into_iter().filter(|s| from.map_or(true, |f| *s >= f)) {
        info!("stage {stage}");
        if let Err(e) = stage.run(config, dir) {
            failure = Some((stage, e));
            break;
        }
        stages_run.push(stage);
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hash,
        seeds: Seeds {
            mlesac: config.geometry.mlesac.seed,
            registration: config.registration.seed,
        },
        stages_run,
        status: if failure.is_some() { "failed" } else { "complete" }.into(),
        failed_stage: failure.as_ref().map(|(s, _)| *s),
        error: failure.as_ref().map(|(_, e)| e.to_string()),
        started,
        finished: now(),
        artifacts: artifact_digests(dir)?,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    if let Some((_, e)) = failure {
        return Err(e);
    }
    read_report_json(&dir.join("report.json"))
}

fn existing(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact(p))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Generates or copies the image triple into the output directory.
pub fn stage_input(config: &PipelineConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match &config.input {
        InputSpec::Phantom(spec) => {
            let case = spec.generate()?;
            save_volume(&case.fixed_image, dir.join("fixed.mhd"))?;
            save_volume(&case.moving_image, dir.join("moving.mhd"))?;
            save_labels(&case.labels, dir.join("labels.mhd"))?;
            write_json(
                &dir.join("phantom.json"),
                &serde_json::json!({ "spec": spec, "info": case.info, "analytic": case.analytic }),
            )?;
        }
        InputSpec::Images { fixed, moving, labels } => {
            let f = load_image(fixed)?;
            let m = load_image(moving)?;
            let l = load_labels(labels)?;
            if !f.same_geometry(l.grid()) {
                return Err(Error::GeometryMismatch("fixed image and label map differ in grid geometry".into()));
            }
            save_volume(&f, dir.join("fixed.mhd"))?;
            save_volume(&m, dir.join("moving.mhd"))?;
            save_labels(&l, dir.join("labels.mhd"))?;
            let _ = fs::remove_file(dir.join("phantom.json"));
        }
    }
    Ok(())
}

/// Marching cubes, smoothing, frames and curvature, saved as `surface.vtk`.
pub fn stage_surface(config: &PipelineConfig, dir: &Path) -> Result<()> {
    let labels = load_labels(existing(dir, "labels.mhd")?)?;
    let mut surface = extract_surface_of(&labels, &config.surface.codes, config.surface.iso)?;
    surface.smooth(&config.surface.smoothing);
    local_frames(&mut surface, config.geometry.neighborhood_k)?;
    let radius = config.geometry.resolve_radius(&surface);
    curvature_radii(&mut surface, radius, &config.geometry.mlesac)?;
    info!("surface: {} vertices, {} triangles, curvature radius {radius:.3} mm", surface.vertex_count(), surface.triangles.len());
    save_surface(&surface, &dir.join("surface.vtk"))
}

pub fn save_surface(surface: &TriangleSurface, path: &Path) -> Result<()> {
    let (Some(frames), Some(radius), Some(flags)) = (&surface.frames, &surface.curvature_radius, &surface.curvature_flags) else {
        return Err(Error::InvalidParameter("surface is missing frames or curvature".into()));
    };
    let data = PolyData {
        points: surface.vertices.clone(),
        polygons: surface.triangles.iter().map(|t| t.to_vec()).collect(),
        normals: Some(frames.iter().map(|f| f.normal).collect()),
        scalars: vec![
            ("curvature_radius".into(), radius.clone()),
            ("curvature_clamped".into(), flags.iter().map(|&f| f as u8 as f64).collect()),
        ],
        vectors: vec![
            ("tangent1".into(), frames.iter().map(|f| f.tangent1).collect()),
            ("tangent2".into(), frames.iter().map(|f| f.tangent2).collect()),
        ],
    };
    write_polydata(&data, "rsii surface", path)
}

pub fn load_surface(path: &Path) -> Result<TriangleSurface> {
    let data = read_polydata(path)?;
    let missing = |what: &str| Error::Vtk {
        path: path.to_path_buf(),
        reason: format!("missing {what}"),
    };
    let mut surface = TriangleSurface::new(data.points.clone(), data.triangles()?)?;
    let normals = data.normals.as_ref().ok_or_else(|| missing("normals"))?;
    let t1 = data.vector("tangent1").ok_or_else(|| missing("tangent1"))?;
    let t2 = data.vector("tangent2").ok_or_else(|| missing("tangent2"))?;
    surface.frames = Some(
        (0..surface.vertex_count())
            .map(|v| LocalFrame {
                normal: normals[v],
                tangent1: t1[v],
                tangent2: t2[v],
            })
            .collect(),
    );
    surface.curvature_radius = Some(data.scalar("curvature_radius").ok_or_else(|| missing("curvature_radius"))?.to_vec());
    surface.curvature_flags = Some(
        data.scalar("curvature_clamped")
            .ok_or_else(|| missing("curvature_clamped"))?
            .iter()
            .map(|&f| f != 0.0)
            .collect(),
    );
    Ok(surface)
}

/// Registers moving onto fixed; saves the field and convergence log.
pub fn stage_register(config: &PipelineConfig, dir: &Path) -> Result<()> {
    let fixed = load_image(existing(dir, "fixed.mhd")?)?;
    let moving = load_image(existing(dir, "moving.mhd")?)?;
    let (field, log) = register_with_log(&fixed, &moving, &config.registration)?;
    save_displacement(&field, dir)?;
    write_json(&dir.join("registration_log.json"), &log)
}

pub fn save_displacement(field: &DisplacementField, dir: &Path) -> Result<()> {
    let [x, y, z] = field.to_components();
    save_volume(&x, dir.join("displacement_x.mhd"))?;
    save_volume(&y, dir.join("displacement_y.mhd"))?;
    save_volume(&z, dir.join("displacement_z.mhd"))
}

pub fn load_displacement(dir: &Path) -> Result<DisplacementField> {
    let load = |axis: &str| load_image(existing(dir, &format!("displacement_{axis}.mhd"))?);
    DisplacementField::from_components(&[load("x")?, load("y")?, load("z")?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverLog {
    pub nodes: usize,
    pub tetrahedra: usize,
    pub layers: usize,
    pub thickness_mm: f64,
    pub pressure_pa: f64,
    pub fixed_nodes: usize,
    pub iterations: usize,
    pub relative_residual: f64,
    pub equilibrium_error: f64,
}

/// Tension fields (N/m) on the surface from the wall solve.
pub fn compute_tension(config: &PipelineConfig, surface: &TriangleSurface) -> Result<(Vec<SurfaceField>, SolverLog)> {
    let mut mesh = build_wall_mesh(surface, config.wall_thickness_mm, config.layers)?;
    if config.ilt_layers > 0 {
        mesh.mark_ilt_layers(config.ilt_layers);
    }
    let solution = solve_elasticity_with(&mesh, config.pressure_pa(), &config.materials, &config.solver)?;
    let averaged = uniform_stress_average(&mesh, &solution.stress)?;
    let t = wall_tension(&mesh, &averaged, surface, config.vessel_axis)?;
    let log = SolverLog {
        nodes: mesh.nodes.len(),
        tetrahedra: mesh.tets.len(),
        layers: mesh.layers,
        thickness_mm: mesh.thickness,
        pressure_pa: config.pressure_pa(),
        fixed_nodes: mesh.fixed_nodes.len(),
        iterations: solution.iterations,
        relative_residual: solution.relative_residual,
        equilibrium_error: solution.equilibrium_error(),
    };
    Ok((vec![t.max_principal, t.circumferential], log))
}

pub fn stage_tension(config: &PipelineConfig, dir: &Path) -> Result<()> {
    let surface = load_surface(&existing(dir, "surface.vtk")?)?;
    let (fields, log) = compute_tension(config, &surface)?;
    let data = PolyData {
        points: surface.vertices.clone(),
        polygons: surface.triangles.iter().map(|t| t.to_vec()).collect(),
        scalars: fields.iter().map(|f| (f.name.clone(), f.values.clone())).collect(),
        ..PolyData::default()
    };
    write_polydata(&data, "rsii wall tension (N/m)", &dir.join("tension.vtk"))?;
    write_json(&dir.join("solver_log.json"), &log)
}

pub fn load_tension(path: &Path) -> Result<(SurfaceField, SurfaceField)> {
    let data = read_polydata(path)?;
    let get = |name: &str| {
        data.scalar(name).map(<[f64]>::to_vec).ok_or_else(|| Error::Vtk {
            path: path.to_path_buf(),
            reason: format!("missing {name}"),
        })
    };
    Ok((
        SurfaceField::new("tension_max_principal", Units::NewtonPerMeter, get("tension_max_principal")?)?,
        SurfaceField::new("tension_circumferential", Units::NewtonPerMeter, get("tension_circumferential")?)?,
    ))
}

/// Strain, SII and RSII on the saved surface; writes `indices.vtk` and
/// `report.json`.
pub fn stage_indices(config: &PipelineConfig, dir: &Path) -> Result<IndexBundle> {
    let surface = load_surface(&existing(dir, "surface.vtk")?)?;
    let field = load_displacement(dir)?;
    let (tension, circumferential) = load_tension(&existing(dir, "tension.vtk")?)?;
    if tension.len() != surface.vertex_count() {
        return Err(Error::FieldMismatch("tension.vtk does not match surface.vtk".into()));
    }
    let (vectors, outside) = interpolate_at_vertices(&field, &surface);
    let frames = surface.frames.as_deref().expect("loaded surfaces carry frames");
    let (u_n, u_t) = normal_displacement(&vectors, frames)?;
    let radius = surface.curvature_radius.as_deref().expect("loaded surfaces carry curvature");
    let clamped = surface.curvature_flags.as_deref().expect("loaded surfaces carry curvature");
    let areas = (config.rsii.weighting == MeanWeighting::Area).then(|| surface.vertex_areas());
    let bundle = compute_indices(&u_n, radius, clamped, &outside, &tension, &config.rsii, areas.as_deref())?;
    if bundle.rsii_degenerate {
        warn!("mean |SII| vanished; rsii written as zeros and flagged in the report");
    }
    let curvature = SurfaceField::new("curvature_radius", Units::Millimeter, radius.to_vec())?;
    let mask = SurfaceField::new("masked", Units::Dimensionless, bundle.mask.iter().map(|&m| m as u8 as f64).collect())?;
    let fields = [&bundle.tension, &circumferential, &u_n, &u_t, &curvature, &bundle.strain, &bundle.sii, &bundle.rsii, &mask];
    let mut data = PolyData {
        points: surface.vertices.clone(),
        polygons: surface.triangles.iter().map(|t| t.to_vec()).collect(),
        normals: Some(frames.iter().map(|f| f.normal).collect()),
        scalars: fields.iter().map(|f| (f.name.clone(), f.values.clone())).collect(),
        vectors: vec![("displacement".into(), vectors)],
    };
    data.scalars.retain(|(_, v)| !v.is_empty());
    write_polydata(&data, "rsii indices (SI units)", &dir.join("indices.vtk"))?;
    export_report_json(&bundle.report, &bundle.masked, &config.hash(), bundle.rsii_degenerate, &dir.join("report.json"))?;
    Ok(bundle)
}
