//! Percentile report JSON in the clinical units N/mm, %, mm/N.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indices::{FieldSummary, MaskCounts, PercentileReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub units: String,
    /// 99th percentile of the absolute value.
    pub p99: f64,
    pub mean: f64,
    pub std: f64,
}

impl FieldReport {
    fn new(units: &str, s: &FieldSummary, scale: f64) -> Self {
        Self {
            units: units.into(),
            p99: s.p99_abs * scale,
            mean: s.mean * scale,
            std: s.std * scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexCounts {
    pub total: usize,
    pub used: usize,
    pub masked: MaskCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub tension: FieldReport,
    pub strain: FieldReport,
    pub sii: FieldReport,
    pub rsii: FieldReport,
    pub vertices: VertexCounts,
    pub rsii_degenerate: bool,
}

impl Report {
    pub fn new(report: &PercentileReport, masked: &MaskCounts, config_hash: &str, rsii_degenerate: bool) -> Self {
        Self {
            config_hash: config_hash.into(),
            tension: FieldReport::new("N/mm", &report.tension, 1e-3),
            strain: FieldReport::new("%", &report.strain, 100.0),
            sii: FieldReport::new("mm/N", &report.sii, 1e3),
            rsii: FieldReport::new("1", &report.rsii, 1.0),
            vertices: VertexCounts {
                total: report.vertices_used + masked.total,
                used: report.vertices_used,
                masked: *masked,
            },
            rsii_degenerate,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let all = [&self.tension, &self.strain, &self.sii, &self.rsii];
        if all.iter().any(|f| !(f.p99.is_finite() && f.mean.is_finite() && f.std.is_finite())) {
            return Err(Error::Degenerate("report contains a non-finite value".into()));
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

pub fn export_report_json(report: &PercentileReport, masked: &MaskCounts, config_hash: &str, rsii_degenerate: bool, path: &Path) -> Result<()> {
    let text = Report::new(report, masked, config_hash, rsii_degenerate).to_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
