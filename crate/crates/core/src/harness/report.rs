//! Experiment report types and their CSV / JSON artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use crate::detectors::DetectorKind;
use crate::error::Result;
use crate::pareto::{OperatingPoint, Staircase};

/// Seeds actually used; `None` for file-backed inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub far: Option<u64>,
    pub near: Option<u64>,
    pub noise: Option<u64>,
    pub echo_path: Option<u64>,
}

/// Sample counts behind the three probability rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSizes {
    pub far: u64,
    pub doubletalk: u64,
    pub change: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryRocPoint {
    pub t1: f64,
    /// False alarms over all samples.
    pub p_f: f64,
    pub p_m: f64,
    /// False alarms over far-end-active samples only.
    pub p_f_far_active: f64,
}

/// Largest row-sum residuals seen over every evaluated threshold pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub far_max: f64,
    pub doubletalk_max: f64,
    pub change_max: f64,
    pub change_row_sum: f64,
}

/// Two-class reduction checked on a control labeling with no change samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionCheck {
    pub max_p_false_deviation: f64,
    pub max_p_miss_deviation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub label: String,
    pub kind: DetectorKind,
    pub t_hold_samples: usize,
    pub class_sizes: ClassSizes,
    /// Every evaluated threshold pair, in grid order.
    pub evaluated: Vec<OperatingPoint>,
    /// Non-dominated subset, sorted by rates.
    pub front: Vec<OperatingPoint>,
    pub banded_front: Option<Vec<OperatingPoint>>,
    pub staircase: Staircase,
    pub binary_roc: Vec<BinaryRocPoint>,
    pub residuals: ResidualSummary,
    pub reduction_check: ReductionCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub config_hash: String,
    pub seeds: SeedSummary,
    pub sample_rate: u32,
    pub n_samples: usize,
    pub change_times: Vec<usize>,
    /// Samples from each change until misalignment re-crosses the reconvergence level.
    pub reconvergence_samples: Vec<Option<usize>>,
    pub t_hold_samples: usize,
    pub t_hold_estimated: bool,
    pub detectors: Vec<DetectorReport>,
    /// Union front over all detectors; empty for hold-time sweeps.
    pub merged_front: Vec<OperatingPoint>,
    pub merged_staircase: Staircase,
}

impl ExperimentReport {
    pub fn detector(&self, label: &str) -> Option<&DetectorReport> {
        self.detectors.iter().find(|d| d.label == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

const POINT_HEADER: [&str; 18] = [
    "config_hash", "series", "detector", "t1", "t2", "p_ff", "p_fd", "p_fc", "p_df", "p_dd", "p_dc",
    "p_cf", "p_cd", "p_cc", "denom_far", "denom_dbl", "denom_chg", "px",
];

fn point_header() -> Vec<&'static str> {
    let mut h = POINT_HEADER.to_vec();
    h.push("py");
    h
}

fn point_row(hash: &str, series: &str, p: &OperatingPoint) -> Vec<String> {
    let q = &p.probs;
    let (px, py) = p.px_py();
    let mut row = vec![
        hash.to_string(),
        series.to_string(),
        p.detector.clone(),
        p.t1.to_string(),
        p.t2.map(|t| t.to_string()).unwrap_or_default(),
    ];
    row.extend(
        [q.p_ff, q.p_fd, q.p_fc, q.p_df, q.p_dd, q.p_dc, q.p_cf, q.p_cd, q.p_cc]
            .iter()
            .map(f64::to_string),
    );
    row.extend([q.denom_far, q.denom_dbl, q.denom_chg].iter().map(u64::to_string));
    row.push(px.to_string());
    row.push(py.to_string());
    row
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the report into `dir` and returns the files written.
///
/// CSV output: `fronts.csv`, `merged_front.csv`, `evaluated.csv`,
/// `pxpy.csv`, `binary_roc.csv`, `summary.csv`. Every row carries the
/// config hash; empty tables still get their header. JSON output is a single
/// `report.json`.
pub fn emit_report(report: &ExperimentReport, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let hash = report.config_hash.as_str();
    if format == OutputFormat::Json {
        let path = dir.join("report.json");
        std::fs::write(&path, report.to_json()?)?;
        return Ok(vec![path]);
    }

    let mut written = Vec::new();
    let mut emit = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let path = dir.join(name);
        write_csv(&path, header, rows.into_iter())?;
        written.push(path);
        Ok(())
    };

    let ph = point_header();
    let per_detector = |pick: fn(&DetectorReport) -> &[OperatingPoint]| -> Vec<Vec<String>> {
        report
            .detectors
            .iter()
            .flat_map(|d| pick(d).iter().map(|p| point_row(hash, &d.label, p)))
            .collect()
    };
    emit("fronts.csv", &ph, per_detector(|d| &d.front))?;
    emit("evaluated.csv", &ph, per_detector(|d| &d.evaluated))?;
    emit(
        "merged_front.csv",
        &ph,
        report.merged_front.iter().map(|p| point_row(hash, "merged", p)).collect(),
    )?;

    let stair_rows = report
        .detectors
        .iter()
        .map(|d| (d.label.as_str(), &d.staircase))
        .chain(std::iter::once(("merged", &report.merged_staircase)))
        .flat_map(|(series, s)| {
            s.points.iter().map(move |p| {
                vec![
                    hash.to_string(),
                    series.to_string(),
                    p.detector.clone(),
                    p.t1.to_string(),
                    p.t2.map(|t| t.to_string()).unwrap_or_default(),
                    p.px.to_string(),
                    p.py.to_string(),
                ]
            })
        })
        .collect();
    emit(
        "pxpy.csv",
        &["config_hash", "series", "detector", "t1", "t2", "px", "py"],
        stair_rows,
    )?;

    let roc_rows = report
        .detectors
        .iter()
        .flat_map(|d| {
            d.binary_roc.iter().map(|r| {
                vec![
                    hash.to_string(),
                    d.label.clone(),
                    r.t1.to_string(),
                    r.p_f.to_string(),
                    r.p_m.to_string(),
                    r.p_f_far_active.to_string(),
                ]
            })
        })
        .collect();
    emit(
        "binary_roc.csv",
        &["config_hash", "detector", "t1", "p_f", "p_m", "p_f_far_active"],
        roc_rows,
    )?;

    let summary_rows = report
        .detectors
        .iter()
        .map(|d| {
            vec![
                hash.to_string(),
                d.label.clone(),
                d.t_hold_samples.to_string(),
                d.class_sizes.far.to_string(),
                d.class_sizes.doubletalk.to_string(),
                d.class_sizes.change.to_string(),
                d.front.len().to_string(),
                d.residuals.far_max.to_string(),
                d.residuals.doubletalk_max.to_string(),
                d.residuals.change_max.to_string(),
                d.residuals.change_row_sum.to_string(),
                d.reduction_check.passed.to_string(),
            ]
        })
        .collect();
    emit(
        "summary.csv",
        &[
            "config_hash",
            "detector",
            "t_hold_samples",
            "n_far",
            "n_doubletalk",
            "n_change",
            "front_size",
            "residual_far",
            "residual_doubletalk",
            "residual_change",
            "change_row_sum",
            "reduction_ok",
        ],
        summary_rows,
    )?;
    Ok(written)
}
