//! JSON run reports. Keys appear in declaration order, so a given report
//! always serializes to the same bytes.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::RunConfig;
use super::export::ExportError;
use crate::design::{ComparisonReport, DesignReport, DesignSummary, RoundRecord};
use crate::rd::ChannelMask;
use crate::thermal::{SolveResult, ThermalMetrics};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct DesignDocument {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: &'static str,
    pub mean_c: f64,
    pub max_c: f64,
    pub metrics: ThermalMetrics,
    pub fill_fraction: f64,
    pub converged: bool,
    pub solver_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rd_steps: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<RoundRecord>,
    pub config: RunConfig,
}

impl DesignDocument {
    pub fn generative(report: &DesignReport, config: &RunConfig) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            kind: "generative",
            mean_c: report.metrics.mean_c,
            max_c: report.metrics.max_c,
            metrics: report.metrics.clone(),
            fill_fraction: report.mask_fill_fraction,
            converged: report.converged,
            solver_iterations: report.solver_iterations,
            rd_steps: Some(report.rd_steps),
            history: report.history.clone(),
            config: config.clone(),
        }
    }

    /// Report for a fixed mask (the baseline, or an imported one).
    pub fn fixed_mask(
        kind: &'static str,
        mask: &ChannelMask,
        solved: &SolveResult,
        metrics: ThermalMetrics,
        config: &RunConfig,
    ) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            kind,
            mean_c: metrics.mean_c,
            max_c: metrics.max_c,
            metrics,
            fill_fraction: mask.fill_fraction(),
            converged: solved.converged,
            solver_iterations: solved.iterations,
            rd_steps: None,
            history: Vec::new(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonDocument {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: &'static str,
    pub baseline: DesignSummary,
    pub generative: DesignSummary,
    /// Baseline minus generative; positive favors the generative design.
    pub delta_mean_c: f64,
    pub delta_max_c: f64,
    pub config: RunConfig,
}

impl ComparisonDocument {
    pub fn new(report: &ComparisonReport, config: &RunConfig) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            kind: "comparison",
            baseline: report.baseline.clone(),
            generative: report.candidate.clone(),
            delta_mean_c: report.delta_mean_c,
            delta_max_c: report.delta_max_c,
            config: config.clone(),
        }
    }
}

pub fn report_to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_report_json<T: Serialize>(
    report: &T,
    path: impl AsRef<Path>,
) -> Result<(), ExportError> {
    let path = path.as_ref();
    fs::write(path, report_to_json(report)).map_err(|source| ExportError::Io {
        path: path.display().to_string(),
        source,
    })
}
