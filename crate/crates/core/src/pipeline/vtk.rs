//! Legacy ASCII VTK PolyData output, plus a reader for the subset written
//! here.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! re-read reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::TriangleSurface;
use crate::solver::SurfaceField;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolyData {
    pub points: Vec<[f64; 3]>,
    pub polygons: Vec<Vec<usize>>,
    pub normals: Option<Vec<[f64; 3]>>,
    pub scalars: Vec<(String, Vec<f64>)>,
    pub vectors: Vec<(String, Vec<[f64; 3]>)>,
}

impl PolyData {
    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn vector(&self, name: &str) -> Option<&[[f64; 3]]> {
        self.vectors.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn triangles(&self) -> Result<Vec<[usize; 3]>> {
        self.polygons
            .iter()
            .map(|p| {
                <[usize; 3]>::try_from(p.as_slice()).map_err(|_| Error::Vtk {
                    path: Default::default(),
                    reason: format!("polygon with {} vertices", p.len()),
                })
            })
            .collect()
    }
}

/// Surface geometry with frame normals (when populated) and the given
/// scalar fields.
pub fn export_vtk(surface: &TriangleSurface, fields: &[SurfaceField], path: &Path) -> Result<()> {
    let data = surface_polydata(surface, fields)?;
    write_polydata(&data, "rsii surface", path)
}

pub fn surface_polydata(surface: &TriangleSurface, fields: &[SurfaceField]) -> Result<PolyData> {
    let n = surface.vertex_count();
    if let Some(f) = fields.iter().find(|f| f.len() != n) {
        return Err(Error::FieldMismatch(format!("field {} has {} values for {n} vertices", f.name, f.len())));
    }
    Ok(PolyData {
        points: surface.vertices.clone(),
        polygons: surface.triangles.iter().map(|t| t.to_vec()).collect(),
        normals: surface.frames.as_ref().map(|f| f.iter().map(|f| f.normal).collect()),
        scalars: fields.iter().map(|f| (f.name.clone(), f.values.clone())).collect(),
        vectors: Vec::new(),
    })
}

pub fn format_polydata(data: &PolyData, title: &str) -> Result<String> {
    let n = data.points.len();
    let check = |name: &str, len: usize| {
        if len != n {
            Err(Error::FieldMismatch(format!("{name} has {len} values for {n} points")))
        } else {
            Ok(())
        }
    };
    let mut out = String::new();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA");
    let _ = writeln!(out, "POINTS {n} double");
    for p in &data.points {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    let size: usize = data.polygons.iter().map(|p| p.len() + 1).sum();
    let _ = writeln!(out, "POLYGONS {} {size}", data.polygons.len());
    for p in &data.polygons {
        let _ = write!(out, "{}", p.len());
        for i in p {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    if data.normals.is_none() && data.scalars.is_empty() && data.vectors.is_empty() {
        return Ok(out);
    }
    let _ = writeln!(out, "POINT_DATA {n}");
    if let Some(normals) = &data.normals {
        check("normals", normals.len())?;
        let _ = writeln!(out, "NORMALS normals double");
        for v in normals {
            let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
        }
    }
    for (name, values) in &data.scalars {
        check(name, values.len())?;
        check_name(name)?;
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            if !v.is_finite() {
                return Err(Error::FieldMismatch(format!("field {name} has a non-finite value")));
            }
            let _ = writeln!(out, "{v}");
        }
    }
    for (name, values) in &data.vectors {
        check(name, values.len())?;
        check_name(name)?;
        let _ = writeln!(out, "VECTORS {name} double");
        for v in values {
            let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
        }
    }
    Ok(out)
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace()) {
        return Err(Error::FieldMismatch(format!("array name {name:?} must be non-empty without spaces")));
    }
    Ok(())
}

pub fn write_polydata(data: &PolyData, title: &str, path: &Path) -> Result<()> {
    let text = format_polydata(data, title)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_polydata(path: &Path) -> Result<PolyData> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_polydata(&text).map_err(|reason| Error::Vtk {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn parse_polydata(text: &str) -> std::result::Result<PolyData, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if !header.starts_with("# vtk DataFile") {
        return Err("missing vtk header".into());
    }
    lines.next().ok_or("missing title")?;
    if lines.next().map(str::trim) != Some("ASCII") {
        return Err("only ASCII files are supported".into());
    }
    let mut tokens = lines.flat_map(str::split_whitespace);
    let mut next = || tokens.next().map(str::to_string).ok_or_else(|| "unexpected end of file".to_string());
    fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
        s.parse().map_err(|_| format!("bad number {s:?}"))
    }

    let mut data = PolyData::default();
    let mut points_n = 0usize;
    let mut pending: Option<String> = next().ok();
    while let Some(keyword) = pending.take() {
        match keyword.as_str() {
            "DATASET" => {
                let kind = next()?;
                if kind != "POLYDATA" {
                    return Err(format!("dataset {kind} is not POLYDATA"));
                }
            }
            "POINTS" => {
                points_n = num(&next()?)?;
                next()?;
                data.points = (0..points_n).map(|_| Ok([num(&next()?)?, num(&next()?)?, num(&next()?)?])).collect::<std::result::Result<_, String>>()?;
            }
            "POLYGONS" => {
                let count: usize = num(&next()?)?;
                next()?;
                for _ in 0..count {
                    let k: usize = num(&next()?)?;
                    let poly = (0..k).map(|_| num(&next()?)).collect::<std::result::Result<Vec<usize>, String>>()?;
                    if poly.iter().any(|&i| i >= points_n) {
                        return Err("polygon index out of range".into());
                    }
                    data.polygons.push(poly);
                }
            }
            "POINT_DATA" => {
                let n: usize = num(&next()?)?;
                if n != points_n {
                    return Err(format!("POINT_DATA {n} does not match {points_n} points"));
                }
            }
            "NORMALS" => {
                next()?;
                next()?;
                data.normals = Some((0..points_n).map(|_| Ok([num(&next()?)?, num(&next()?)?, num(&next()?)?])).collect::<std::result::Result<_, String>>()?);
            }
            "SCALARS" => {
                let name = next()?;
                next()?;
                let mut tok = next()?;
                if tok.parse::<usize>().is_ok() {
                    tok = next()?;
                }
                if tok == "LOOKUP_TABLE" {
                    next()?;
                    tok = next()?;
                }
                let mut values = Vec::with_capacity(points_n);
                values.push(num(&tok)?);
                for _ in 1..points_n {
                    values.push(num(&next()?)?);
                }
                data.scalars.push((name, values));
            }
            "VECTORS" => {
                let name = next()?;
                next()?;
                let values = (0..points_n).map(|_| Ok([num(&next()?)?, num(&next()?)?, num(&next()?)?])).collect::<std::result::Result<_, String>>()?;
                data.vectors.push((name, values));
            }
            other => return Err(format!("unsupported section {other}")),
        }
        pending = next().ok();
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_first_value_after_lookup_table() {
        let text = "# vtk DataFile Version 3.0\nt\nASCII\nDATASET POLYDATA\nPOINTS 1 double\n0 0 0\nPOLYGONS 0 0\nPOINT_DATA 1\nSCALARS a double 1\nLOOKUP_TABLE default\n2.5\n";
        let d = parse_polydata(text).unwrap();
        assert_eq!(d.scalar("a"), Some(&[2.5][..]));
    }

    #[test]
    fn rejects_other_datasets() {
        let text = "# vtk DataFile Version 3.0\nt\nASCII\nDATASET UNSTRUCTURED_GRID\n";
        assert!(parse_polydata(text).is_err());
        assert!(parse_polydata("# vtk DataFile\nt\nBINARY\n").is_err());
    }
}
