//! The `report.json` schema.
//!
//! Every dB figure in a report can be recomputed from plain values stored
//! next to it: objective gaps from the two objectives, droops from the peak
//! and target powers.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sparsebeam::eval::{CrossCorrPair, Evaluation};
use sparsebeam::sdr::DesignResult;
use sparsebeam::{steering_vector, RunConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub tag: String,
    /// The full configuration the run used, scenario included.
    pub config: RunConfig,
    pub design: DesignSummary,
    pub sparsity: Option<SparsitySummary>,
    pub enumeration: Option<EnumerationSummary>,
    pub baselines: Vec<BaselineSummary>,
    pub solver: SolverStats,
    pub timings: Timings,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSummary {
    pub mask: String,
    pub indices: Vec<usize>,
    /// `Σ_l ⟨Q_l, R_l⟩` before power scaling.
    pub objective: f64,
    /// `10·log10(objective / enumeration.best_value)`.
    pub objective_db_vs_enum: Option<f64>,
    pub alpha: f64,
    pub rank_ratios: Vec<f64>,
    pub rank1_fallback: Vec<bool>,
    pub metrics: PatternMetrics,
}

/// Pattern figures of `α·R`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternMetrics {
    /// Sweep maximum of the composite pattern.
    pub peak_power: f64,
    pub target_powers: Vec<f64>,
    /// `10·log10(peak_power)` minus the mean of `10·log10(target_powers)`.
    pub droop_db: f64,
    pub crosscorr: Vec<CrossCorrPair>,
}

impl PatternMetrics {
    pub fn new(result: &DesignResult, config: &RunConfig, eval: &Evaluation) -> Self {
        let scaled = result.composite.scaled(result.alpha);
        let grid = &config.scenario.grid;
        PatternMetrics {
            peak_power: eval.composite.max_power(),
            target_powers: config
                .scenario
                .targets
                .iter()
                .map(|t| scaled.quad_form(&steering_vector(t.angle, grid)))
                .collect(),
            droop_db: eval.droop_db,
            crosscorr: eval.crosscorr.pairs.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsitySummary {
    pub mu_final: f64,
    pub trivial: bool,
    pub trimmed: bool,
    pub monotonicity_violations: usize,
    pub relaxed_solves: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnumerationSummary {
    pub subsets: usize,
    pub best_mask: String,
    pub best_value: f64,
    pub worst_mask: String,
    pub worst_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub name: String,
    pub mask: String,
    pub value: f64,
    /// `10·log10(value / enumeration.best_value)`.
    pub value_db_vs_best: Option<f64>,
    pub metrics: PatternMetrics,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub relaxed_iterations: usize,
    pub resolve_iterations: Vec<usize>,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub sparsity: f64,
    pub resolve: f64,
    pub enumeration: f64,
    pub evaluation: f64,
    pub total: f64,
}

impl RunReport {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: RunReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        report
            .config
            .validate()
            .with_context(|| format!("scenario echo in {}", path.display()))?;
        Ok(report)
    }
}

pub fn db_ratio(value: f64, reference: f64) -> f64 {
    10.0 * (value / reference).log10()
}
