//! TOML run configuration.
//!
//! ```toml
//! budget_p = 10
//! total_power = 1.0
//! sweep_deg = 0.25
//! seed = 7
//!
//! [grid]
//! n = 18
//! spacing_ratio = 0.5
//!
//! [[targets]]
//! deg = 40.0
//! weight = 1.0
//!
//! [[undesired]]
//! deg = 25.0
//!
//! [solver]
//! eps_abs = 1e-6
//!
//! [controller]
//! mu_upper = 3.0
//! ```
//!
//! Weights default to 1, `trace_reg` to one entry of 1 per target,
//! `spacing_ratio` to 0.5 and `total_power` to 1. Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conic::SolverSettings;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_SWEEP_STEP;
use crate::model::{ArrayGrid, Direction, Scenario};
use crate::sdr::SparsityController;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    n: usize,
    #[serde(default = "default_spacing")]
    spacing_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectionSpec {
    deg: f64,
    #[serde(default = "one")]
    weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: GridSpec,
    budget_p: usize,
    #[serde(default = "one")]
    total_power: f64,
    targets: Vec<DirectionSpec>,
    #[serde(default)]
    undesired: Vec<DirectionSpec>,
    #[serde(default)]
    trace_reg: Option<Vec<f64>>,
    #[serde(default)]
    solver: SolverSettings,
    #[serde(default)]
    controller: SparsityController,
    #[serde(default = "default_sweep")]
    sweep_deg: f64,
    #[serde(default)]
    seed: u64,
}

fn one() -> f64 {
    1.0
}

fn default_spacing() -> f64 {
    ArrayGrid::DEFAULT_SPACING
}

fn default_sweep() -> f64 {
    DEFAULT_SWEEP_STEP
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub solver: SolverSettings,
    pub controller: SparsityController,
    pub sweep_deg: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
        let grid = ArrayGrid::new(raw.grid.n, raw.grid.spacing_ratio)?;
        let directions = |field: &str, list: &[DirectionSpec]| -> Result<Vec<Direction>> {
            list.iter()
                .enumerate()
                .map(|(i, d)| {
                    Direction::new(d.deg, d.weight).map_err(|e| match e {
                        Error::Validation { reason, .. } => Error::validation(format!("{field}[{i}].deg"), reason),
                        other => other,
                    })
                })
                .collect()
        };
        let targets = directions("targets", &raw.targets)?;
        let undesired = directions("undesired", &raw.undesired)?;
        let trace_reg = raw.trace_reg.unwrap_or_else(|| vec![1.0; targets.len()]);
        let scenario = Scenario::new(grid, targets, undesired, trace_reg, raw.budget_p, raw.total_power)?;
        let cfg = RunConfig {
            scenario,
            solver: raw.solver,
            controller: raw.controller,
            sweep_deg: raw.sweep_deg,
            seed: raw.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.solver.validate()?;
        self.controller.validate()?;
        if !(self.sweep_deg > 0.0 && self.sweep_deg <= 180.0) {
            return Err(Error::validation("sweep_deg", "must lie in (0, 180]"));
        }
        Ok(())
    }

    /// The reference scenario with default solver and controller settings.
    pub fn reference() -> Self {
        RunConfig {
            scenario: Scenario::reference(),
            solver: SolverSettings::default(),
            controller: SparsityController::default(),
            sweep_deg: DEFAULT_SWEEP_STEP,
            seed: 0,
        }
    }
}
