//! First-order conic solver.
//!
//! Problems are posed in the standard form
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x + s = b,   s ∈ K
//! ```
//!
//! where `K` is a product of zero, nonnegative, second-order and PSD cones.
//! The dual is `maximize −bᵀy` subject to `c + Aᵀy = 0`, `y ∈ K*`.

mod admm;
mod anderson;
mod cones;
mod ldl;
mod sparse;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use admm::{solve, solve_warm};
pub use cones::{
    cone_distance, project_cone, project_dual_cone, smat, svec, tri_index, ConeBlock, ConeSpec,
};
pub use sparse::SparseMatrix;

#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub cones: ConeSpec,
}

impl ConeProgram {
    pub fn new(c: Vec<f64>, a: SparseMatrix, b: Vec<f64>, cones: ConeSpec) -> Result<Self> {
        let p = ConeProgram { c, a, b, cones };
        p.validate()?;
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.cones.validate()?;
        let m = self.cones.total_dim();
        if self.a.rows() != m || self.b.len() != m {
            return Err(Error::Dimension(format!(
                "A has {} rows and b has {} entries, cones need {m}",
                self.a.rows(),
                self.b.len()
            )));
        }
        if self.a.cols() != self.c.len() {
            return Err(Error::Dimension(format!(
                "A has {} columns but c has {} entries",
                self.a.cols(),
                self.c.len()
            )));
        }
        let finite = self.c.iter().chain(&self.b).all(|v| v.is_finite())
            && self.a.values().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric("cone program data contains NaN or Inf".into()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }

    /// Writes a plain-text dump: dimensions, cone list, `c`, `b`, then `A`
    /// dense row-major, one row per line.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        writeln!(w, "variables {}", self.num_vars())?;
        writeln!(w, "constraints {}", self.num_rows())?;
        writeln!(w, "cones {}", self.cones.blocks.len())?;
        for line in self.cones.describe() {
            writeln!(w, "{line}")?;
        }
        writeln!(w, "c")?;
        writeln!(w, "{}", join(&self.c))?;
        writeln!(w, "b")?;
        writeln!(w, "{}", join(&self.b))?;
        writeln!(w, "A")?;
        let dense = self.a.to_dense();
        for row in dense.chunks(self.num_vars().max(1)) {
            writeln!(w, "{}", join(row))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Over-relaxation factor, strictly between 1 and 2.
    pub over_relaxation: f64,
    /// Ruiz equilibration of the problem data.
    pub scaling_enabled: bool,
    /// Iterations between residual evaluations.
    pub check_interval: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub adaptive_rho: bool,
    /// Anderson acceleration memory; zero disables acceleration.
    pub anderson_memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iters: 50_000,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            over_relaxation: 1.6,
            scaling_enabled: true,
            check_interval: 25,
            rho: 0.1,
            adaptive_rho: true,
            anderson_memory: 10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::validation(format!("solver.{field}"), why));
        if !(self.eps_abs > 0.0 && self.eps_abs.is_finite()) {
            return bad("eps_abs", "must be positive");
        }
        if !(self.eps_rel > 0.0 && self.eps_rel.is_finite()) {
            return bad("eps_rel", "must be positive");
        }
        if !(self.over_relaxation > 1.0 && self.over_relaxation < 2.0) {
            return bad("over_relaxation", "must lie strictly between 1 and 2");
        }
        if self.check_interval == 0 {
            return bad("check_interval", "must be at least 1");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho", "must be positive");
        }
        Ok(())
    }

    /// Same settings with both tolerances set to `eps`.
    pub fn with_tolerance(mut self, eps: f64) -> Self {
        self.eps_abs = eps;
        self.eps_rel = eps;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub objective: f64,
    pub iterations: usize,
    pub rho_updates: usize,
    /// Final ADMM penalty, reusable for warm starts.
    pub rho: f64,
}

/// Unscaled optimality measures of a candidate point together with the
/// thresholds they must meet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub gap_tol: f64,
}

impl KktResiduals {
    pub fn converged(&self) -> bool {
        self.primal <= self.primal_tol && self.dual <= self.dual_tol && self.gap <= self.gap_tol
    }
}

/// Recomputes residuals of `(x, y, s)` from the original data:
/// `‖Ax + s − b‖∞`, `‖c + Aᵀy‖∞`, `|cᵀx + bᵀy|`.
pub fn kkt_residuals(p: &ConeProgram, x: &[f64], y: &[f64], s: &[f64], settings: &SolverSettings) -> KktResiduals {
    kkt_residuals_with(p, &p.a.transpose(), x, y, s, settings)
}

pub(crate) fn kkt_residuals_with(
    p: &ConeProgram,
    at: &SparseMatrix,
    x: &[f64],
    y: &[f64],
    s: &[f64],
    settings: &SolverSettings,
) -> KktResiduals {
    let ax = p.a.apply(x);
    let aty = at.apply(y);
    let primal = ax
        .iter()
        .zip(s)
        .zip(&p.b)
        .map(|((a, s), b)| (a + s - b).abs())
        .fold(0.0, f64::max);
    let dual = aty
        .iter()
        .zip(&p.c)
        .map(|(a, c)| (a + c).abs())
        .fold(0.0, f64::max);
    let cx = dot(&p.c, x);
    let by = dot(&p.b, y);
    let (ea, er) = (settings.eps_abs, settings.eps_rel);
    KktResiduals {
        primal,
        dual,
        gap: (cx + by).abs(),
        primal_tol: ea + er * inf_norm(&ax).max(inf_norm(s)).max(inf_norm(&p.b)),
        dual_tol: ea + er * inf_norm(&aty).max(inf_norm(&p.c)),
        gap_tol: ea + er * cx.abs().max(by.abs()),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
