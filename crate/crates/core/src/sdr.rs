//! Group-sparse SDR design: per-target matrices, the relaxed program, the
//! reweighting and bisection loops, the reduced re-solve, and power scaling.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{self, svec, tri_index, ConeBlock, ConeProgram, ConeSolution, ConeSpec, SolveStatus, SolverSettings, SparseMatrix};
use crate::error::{Error, Result};
use crate::hermitian::{eig_herm, outer, principal_eigpair, HermitianMatrix, RealSymmetric};
use crate::model::{restrict, steering_vector, Scenario, SelectionMask};

/// Ratio `λ2/λ1` above which a constituent is replaced by its rank-1
/// projection.
pub const RANK_RATIO_TOL: f64 = 1e-3;

/// Relative change of `R̃` below which the reweighting loop is considered
/// settled.
const REWEIGHT_SETTLE_TOL: f64 = 1e-3;

/// Per-target quadratic forms of the design.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub n: usize,
    pub target_vectors: Vec<Vec<Complex64>>,
    /// `a_l a_lᴴ`.
    pub amat: Vec<HermitianMatrix>,
    /// `B̄_l + ρ_l I`.
    pub qmat: Vec<HermitianMatrix>,
    pub scenario: Scenario,
}

impl DesignProblem {
    pub fn num_targets(&self) -> usize {
        self.target_vectors.len()
    }

    /// The same problem restricted to the active sensors of `mask`.
    pub fn restrict(&self, mask: &SelectionMask) -> Result<DesignProblem> {
        if mask.len() != self.n {
            return Err(Error::Dimension(format!("mask has {} entries, grid has {}", mask.len(), self.n)));
        }
        Ok(DesignProblem {
            n: mask.count(),
            target_vectors: self
                .target_vectors
                .iter()
                .map(|a| restrict(a, mask))
                .collect::<Result<_>>()?,
            amat: self.amat.iter().map(|m| m.restrict(mask)).collect::<Result<_>>()?,
            qmat: self.qmat.iter().map(|m| m.restrict(mask)).collect::<Result<_>>()?,
            scenario: self.scenario.clone(),
        })
    }

    /// `Σ_l ⟨Q_l, R_l⟩`.
    pub fn objective(&self, constituents: &[HermitianMatrix]) -> f64 {
        self.qmat.iter().zip(constituents).map(|(q, r)| q.inner(r)).sum()
    }
}

/// Builds `A_l = a_l a_lᴴ` and `Q_l = Σ_q w_q a_q a_qᴴ + Σ_{l'≠l} w_l' a_l' a_l'ᴴ + ρ_l I`.
pub fn assemble(s: &Scenario) -> Result<DesignProblem> {
    s.validate()?;
    let n = s.grid.n();
    let targets: Vec<Vec<Complex64>> = s.targets.iter().map(|d| steering_vector(d.angle, &s.grid)).collect();
    let mut undesired = HermitianMatrix::zeros(n);
    for d in &s.undesired {
        undesired = undesired.add(&outer(&steering_vector(d.angle, &s.grid)).scaled(d.weight));
    }
    let target_outer: Vec<HermitianMatrix> = targets.iter().map(|a| outer(a)).collect();
    let qmat = (0..targets.len())
        .map(|l| {
            let mut b = undesired.clone();
            for (lp, m) in target_outer.iter().enumerate() {
                if lp != l {
                    b = b.add(&m.scaled(s.targets[lp].weight));
                }
            }
            b.add_identity(s.trace_reg[l])
        })
        .collect();
    Ok(DesignProblem {
        n,
        target_vectors: targets,
        amat: target_outer,
        qmat,
        scenario: s.clone(),
    })
}

/// Reweighting matrix `U` and its regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightState {
    pub u: RealSymmetric,
    pub epsilon: f64,
    pub iteration: usize,
}

impl ReweightState {
    pub const DEFAULT_EPSILON: f64 = 0.05;

    /// All-ones `U`.
    pub fn new(n: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::validation("epsilon", "must be positive"));
        }
        Ok(ReweightState {
            u: RealSymmetric::new(n, vec![1.0; n * n])?,
            epsilon,
            iteration: 0,
        })
    }
}

/// `U_mn = 1/(R̃_mn + ε)`, with slightly negative entries clipped to zero.
pub fn update_reweight(st: &ReweightState, r_tilde: &RealSymmetric) -> Result<ReweightState> {
    if r_tilde.dim() != st.u.dim() {
        return Err(Error::Dimension(format!(
            "R̃ is {0}x{0}, U is {1}x{1}",
            r_tilde.dim(),
            st.u.dim()
        )));
    }
    let data = r_tilde.entries().iter().map(|&v| 1.0 / (v.max(0.0) + st.epsilon)).collect();
    Ok(ReweightState {
        u: RealSymmetric::new(r_tilde.dim(), data)?,
        epsilon: st.epsilon,
        iteration: st.iteration + 1,
    })
}

/// Sensors whose row maximum in `R̃` exceeds `gamma` times the largest entry.
pub fn support_of(r_tilde: &RealSymmetric, gamma: f64) -> Result<SelectionMask> {
    let n = r_tilde.dim();
    let top = r_tilde.entries().iter().fold(0.0f64, |a, &b| a.max(b));
    if !(top > 0.0) {
        return Err(Error::Degenerate("R̃ is identically zero".into()));
    }
    let active = (0..n)
        .map(|i| (0..n).map(|j| r_tilde.get(i, j)).fold(0.0f64, f64::max) > gamma * top)
        .collect();
    SelectionMask::new(active)
}

/// Bisection and reweighting controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsityController {
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub max_bisection_steps: usize,
    pub max_reweight_iters: usize,
    /// Bisection stops once the bracket is narrower than this fraction of
    /// its upper end.
    pub mu_rel_tol: f64,
}

impl Default for SparsityController {
    fn default() -> Self {
        SparsityController {
            mu_lower: 0.01,
            mu_upper: 3.0,
            gamma: 1e-5,
            epsilon: ReweightState::DEFAULT_EPSILON,
            max_bisection_steps: 40,
            max_reweight_iters: 12,
            mu_rel_tol: 1e-3,
        }
    }
}

impl SparsityController {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_lower > 0.0 && self.mu_lower < self.mu_upper && self.mu_upper.is_finite()) {
            return Err(Error::validation("controller.mu_lower", "need 0 < mu_lower < mu_upper"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::validation("controller.gamma", "must lie in (0, 1)"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation("controller.epsilon", "must be positive"));
        }
        if !(self.mu_rel_tol > 0.0 && self.mu_rel_tol < 1.0) {
            return Err(Error::validation("controller.mu_rel_tol", "must lie in (0, 1)"));
        }
        if self.max_bisection_steps == 0 || self.max_reweight_iters == 0 {
            return Err(Error::validation("controller", "iteration limits must be at least 1"));
        }
        Ok(())
    }
}

/// Variable layout of the relaxed program.
///
/// Each `R_l` owns `n²` real variables: the diagonal first, then `(Re, Im)`
/// of every strict upper entry in row-major order. `R̃` follows with one
/// variable per unordered pair.
#[derive(Debug, Clone, Copy)]
pub struct SdrLayout {
    pub n: usize,
    pub targets: usize,
    pub with_tilde: bool,
}

impl SdrLayout {
    fn block(&self) -> usize {
        self.n * self.n
    }

    fn pair(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    fn diag(&self, l: usize, i: usize) -> usize {
        l * self.block() + i
    }

    fn re(&self, l: usize, i: usize, j: usize) -> usize {
        l * self.block() + self.n + 2 * self.pair(i, j)
    }

    fn im(&self, l: usize, i: usize, j: usize) -> usize {
        self.re(l, i, j) + 1
    }

    /// Index of `R̃_ij`, `i ≤ j`.
    fn tilde(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.with_tilde && i <= j);
        self.targets * self.block() + tri_index(j, i, self.n)
    }

    pub fn num_vars(&self) -> usize {
        let t = if self.with_tilde { self.n * (self.n + 1) / 2 } else { 0 };
        self.targets * self.block() + t
    }

    /// Coefficients `c` with `cᵀx = ⟨H, R_l⟩ = Re Tr(H R_l)`.
    fn inner_coeffs(&self, l: usize, h: &HermitianMatrix) -> Vec<(usize, f64)> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            out.push((self.diag(l, i), h.get(i, i).re));
            for j in i + 1..n {
                let z = h.get(i, j);
                out.push((self.re(l, i, j), 2.0 * z.re));
                out.push((self.im(l, i, j), 2.0 * z.im));
            }
        }
        out
    }

    /// `(Re R_l[i][j], Im R_l[i][j])` as signed variable references.
    fn entry(&self, l: usize, i: usize, j: usize) -> (Option<(usize, f64)>, Option<(usize, f64)>) {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => (Some((self.diag(l, i), 1.0)), None),
            Less => (Some((self.re(l, i, j), 1.0)), Some((self.im(l, i, j), 1.0))),
            Greater => (Some((self.re(l, j, i), 1.0)), Some((self.im(l, j, i), -1.0))),
        }
    }

    /// Reads `R_l` out of a solution vector.
    pub fn constituent(&self, x: &[f64], l: usize) -> HermitianMatrix {
        let n = self.n;
        let get = |r: Option<(usize, f64)>| r.map_or(0.0, |(k, s)| s * x[k]);
        HermitianMatrix::from_fn(n, |i, j| {
            let (re, im) = self.entry(l, i, j);
            Complex64::new(get(re), get(im))
        })
        .expect("layout reads are Hermitian by construction")
    }

    /// Reads `R̃` out of a solution vector, clipping negatives to zero.
    pub fn tilde_matrix(&self, x: &[f64]) -> RealSymmetric {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = x[self.tilde(i, j)].max(0.0);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        RealSymmetric::new(n, data).expect("square by construction")
    }
}

/// Dimension report of a relaxed program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeCensus {
    pub variables: usize,
    pub rows: usize,
    pub psd_blocks: usize,
    /// Order of each real-embedded PSD block.
    pub psd_order: usize,
    pub nonneg_rows: usize,
    pub soc_cones: usize,
}

impl ConeCensus {
    pub fn of(p: &ConeProgram) -> Self {
        let mut c = ConeCensus {
            variables: p.num_vars(),
            rows: p.num_rows(),
            psd_blocks: 0,
            psd_order: 0,
            nonneg_rows: 0,
            soc_cones: 0,
        };
        for b in &p.cones.blocks {
            match *b {
                ConeBlock::PsdTriangle(k) => {
                    c.psd_blocks += 1;
                    c.psd_order = k;
                }
                ConeBlock::NonNeg(m) => c.nonneg_rows += m,
                ConeBlock::SecondOrder(_) => c.soc_cones += 1,
                ConeBlock::Zero(_) => {}
            }
        }
        c
    }
}

struct Rows {
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
}

impl Rows {
    fn push(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, b: f64) {
        let r = self.b.len();
        self.triplets.extend(coeffs.into_iter().map(|(c, v)| (r, c, v)));
        self.b.push(b);
    }
}

/// Assembles the relaxed program in the solver's standard form.
///
/// With `u = None` the sparsity term and `R̃` are omitted, leaving the
/// decoupled fixed-support program.
fn build_program(dp: &DesignProblem, u: Option<(&RealSymmetric, f64)>) -> Result<(ConeProgram, SdrLayout)> {
    let n = dp.n;
    let targets = dp.num_targets();
    let layout = SdrLayout {
        n,
        targets,
        with_tilde: u.is_some(),
    };
    let mut c = vec![0.0; layout.num_vars()];
    for l in 0..targets {
        for (k, v) in layout.inner_coeffs(l, &dp.qmat[l]) {
            c[k] += v;
        }
    }
    if let Some((u, mu)) = u {
        for i in 0..n {
            for j in i..n {
                let w = if i == j { 1.0 } else { 2.0 };
                c[layout.tilde(i, j)] += mu * w * u.get(i, j);
            }
        }
    }

    let mut rows = Rows {
        triplets: Vec::new(),
        b: Vec::new(),
    };
    let mut blocks = Vec::new();

    // Tr(R_l A_l) ≥ 1.
    for l in 0..targets {
        let coeffs = layout.inner_coeffs(l, &dp.amat[l]);
        rows.push(coeffs.into_iter().map(|(k, v)| (k, -v)), -1.0);
    }
    blocks.push(ConeBlock::NonNeg(targets));

    // R̃_ij ≥ |R_l[i][j]|.
    if layout.with_tilde {
        for l in 0..targets {
            for i in 0..n {
                for j in i..n {
                    let (re, im) = layout.entry(l, i, j);
                    rows.push([(layout.tilde(i, j), -1.0)], 0.0);
                    rows.push(re.map(|(k, s)| (k, -s)), 0.0);
                    rows.push(im.map(|(k, s)| (k, -s)), 0.0);
                    blocks.push(ConeBlock::SecondOrder(3));
                }
            }
        }
    }

    // R_l ⪰ 0 through the real embedding [[Re, −Im], [Im, Re]].
    let m = 2 * n;
    let sqrt2 = std::f64::consts::SQRT_2;
    for l in 0..targets {
        for col in 0..m {
            for row in col..m {
                let scale = if row == col { 1.0 } else { sqrt2 };
                let (i, j) = (row % n, col % n);
                let (re, im) = layout.entry(l, i, j);
                let r = match (row >= n, col >= n) {
                    (false, false) | (true, true) => re,
                    (true, false) => im,
                    (false, true) => im.map(|(k, s)| (k, -s)),
                };
                rows.push(r.map(|(k, s)| (k, -scale * s)), 0.0);
            }
        }
        blocks.push(ConeBlock::PsdTriangle(m));
    }

    let a = SparseMatrix::from_triplets(rows.b.len(), layout.num_vars(), &rows.triplets)?;
    let p = ConeProgram::new(c, a, rows.b, ConeSpec::new(blocks)?)?;
    Ok((p, layout))
}

/// The group-sparse relaxation at penalty `mu` with reweighting `st`.
pub fn build_sdr(dp: &DesignProblem, st: &ReweightState, mu: f64) -> Result<(ConeProgram, SdrLayout)> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::validation("mu", "must be nonnegative"));
    }
    if st.u.dim() != dp.n {
        return Err(Error::Dimension(format!("U is {0}x{0}, grid has {1}", st.u.dim(), dp.n)));
    }
    build_program(dp, Some((&st.u, mu)))
}

/// The penalty-free program on the full grid of `dp`.
pub fn build_fixed_support(dp: &DesignProblem) -> Result<(ConeProgram, SdrLayout)> {
    build_program(dp, None)
}

/// One relaxed solve inside the bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub bisection_step: usize,
    pub mu: f64,
    pub reweight_iter: usize,
    pub cardinality: usize,
    pub mask: SelectionMask,
    /// `Σ_l ⟨Q_l, R_l⟩` at the relaxed solution.
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Result of the sparsity search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseOutcome {
    pub mu_final: f64,
    pub mask: SelectionMask,
    /// No bisection was needed (`P = n`).
    pub trivial: bool,
    /// The mask came from trimming a larger support.
    pub trimmed: bool,
    /// Pairs of trials where a smaller `μ` gave a smaller support.
    pub monotonicity_violations: usize,
    pub trace: Vec<TraceEntry>,
}

struct Trial {
    mask: SelectionMask,
    r_tilde: RealSymmetric,
}

fn checked(sol: ConeSolution) -> Result<ConeSolution> {
    match sol.status {
        SolveStatus::Optimal | SolveStatus::MaxIters => Ok(sol),
        SolveStatus::Infeasible => Err(Error::Numeric("relaxed program reported infeasible".into())),
        SolveStatus::Unbounded => Err(Error::Numeric("relaxed program reported unbounded".into())),
    }
}

/// Reweighting loop at one penalty value. Stops once the support has the
/// requested size, once `R̃` settles, or after the iteration limit.
fn reweight_trial(
    dp: &DesignProblem,
    ctrl: &SparsityController,
    solver: &SolverSettings,
    mu: f64,
    step: usize,
    trace: &mut Vec<TraceEntry>,
) -> Result<Trial> {
    let target = dp.scenario.budget_p;
    let mut st = ReweightState::new(dp.n, ctrl.epsilon)?;
    let mut prev: Option<Trial> = None;
    for it in 0..ctrl.max_reweight_iters {
        let (p, layout) = build_sdr(dp, &st, mu)?;
        let sol = checked(conic::solve(&p, solver)?)?;
        let r_tilde = layout.tilde_matrix(&sol.x);
        let mask = support_of(&r_tilde, ctrl.gamma)?;
        let constituents: Vec<_> = (0..dp.num_targets()).map(|l| layout.constituent(&sol.x, l)).collect();
        let entry = TraceEntry {
            bisection_step: step,
            mu,
            reweight_iter: it,
            cardinality: mask.count(),
            mask: mask.clone(),
            objective: dp.objective(&constituents),
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
        };
        log::debug!(
            "mu={mu:.6} iter={it} card={} obj={:.6e} admm={} {:?}",
            entry.cardinality,
            entry.objective,
            entry.iterations,
            entry.status
        );
        trace.push(entry);

        let settled = prev.as_ref().is_some_and(|p| {
            p.mask == mask && relative_change(&p.r_tilde, &r_tilde) <= REWEIGHT_SETTLE_TOL
        });
        let done = mask.count() == target || settled;
        st = update_reweight(&st, &r_tilde)?;
        prev = Some(Trial { mask, r_tilde });
        if done {
            break;
        }
    }
    Ok(prev.expect("at least one reweighting iteration"))
}

fn relative_change(a: &RealSymmetric, b: &RealSymmetric) -> f64 {
    let diff: f64 = a
        .entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

/// Drops the sensors with the smallest `R̃` row mass (lowest index first on
/// ties) until `p` remain.
pub fn trim_mask(mask: &SelectionMask, r_tilde: &RealSymmetric, p: usize) -> Result<SelectionMask> {
    if mask.count() < p {
        return Err(Error::Budget(format!("cannot trim {} sensors down to {p}", mask.count())));
    }
    let n = mask.len();
    let mut active = mask.indices();
    let mass = |i: usize| (0..n).map(|j| r_tilde.get(i, j)).sum::<f64>();
    while active.len() > p {
        let (pos, _) = active
            .iter()
            .enumerate()
            .min_by(|(_, &a), (_, &b)| mass(a).total_cmp(&mass(b)))
            .expect("nonempty support");
        active.remove(pos);
    }
    SelectionMask::from_indices(n, &active)
}

/// Bisection on `μ` for a support of exactly `budget_p` sensors.
pub fn sparse_design(dp: &DesignProblem, ctrl: &SparsityController, solver: &SolverSettings) -> Result<SparseOutcome> {
    ctrl.validate()?;
    let target = dp.scenario.budget_p;
    if target > dp.n {
        return Err(Error::Budget(format!("budget {target} exceeds grid size {}", dp.n)));
    }
    if target == dp.n {
        return Ok(SparseOutcome {
            mu_final: ctrl.mu_lower,
            mask: SelectionMask::full(dp.n),
            trivial: true,
            trimmed: false,
            monotonicity_violations: 0,
            trace: Vec::new(),
        });
    }

    let (mut lo, mut hi) = (ctrl.mu_lower, ctrl.mu_upper);
    let mut trace = Vec::new();
    let mut history: Vec<(f64, usize)> = Vec::new();
    let mut above: Option<(f64, Trial)> = None;
    let mut found = None;
    for step in 0..ctrl.max_bisection_steps {
        if hi - lo <= ctrl.mu_rel_tol * hi {
            break;
        }
        let mu = 0.5 * (lo + hi);
        let trial = reweight_trial(dp, ctrl, solver, mu, step, &mut trace)?;
        let card = trial.mask.count();
        log::info!("bisection step {step}: mu={mu:.6} cardinality={card}");
        history.push((mu, card));
        if card == target {
            found = Some((mu, trial.mask));
            break;
        }
        if card > target {
            lo = mu;
            if above.as_ref().is_none_or(|(_, t)| card <= t.mask.count()) {
                above = Some((mu, trial));
            }
        } else {
            hi = mu;
        }
    }

    let mut violations = 0;
    for (i, &(ma, ca)) in history.iter().enumerate() {
        for &(mb, cb) in &history[i + 1..] {
            if (ma < mb && ca < cb) || (mb < ma && cb < ca) {
                violations += 1;
            }
        }
    }
    if violations > 0 {
        log::warn!("cardinality was not monotone in mu across {violations} trial pairs");
    }

    let (mu_final, mask, trimmed) = match (found, above) {
        (Some((mu, mask)), _) => (mu, mask, false),
        (None, Some((mu, trial))) => {
            log::warn!(
                "bisection ended without an exact match; trimming a {}-sensor support to {target}",
                trial.mask.count()
            );
            (mu, trim_mask(&trial.mask, &trial.r_tilde, target)?, true)
        }
        (None, None) => {
            return Err(Error::Budget(format!(
                "no trial produced at least {target} active sensors; lower mu_lower"
            )))
        }
    };
    Ok(SparseOutcome {
        mu_final,
        mask,
        trivial: false,
        trimmed,
        monotonicity_violations: violations,
        trace,
    })
}

/// A transmit design on a fixed support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub mask: SelectionMask,
    /// Full `n×n` constituents, zero off the support.
    pub constituents: Vec<HermitianMatrix>,
    pub composite: HermitianMatrix,
    /// Power scale `P_t / Tr(R)`.
    pub alpha: f64,
    /// `Σ_l ⟨Q_l, R_l⟩` before scaling.
    pub objective: f64,
    /// `√λ1 · v1` of each constituent, full length.
    pub rank1_vectors: Vec<Vec<Complex64>>,
    pub rank_ratios: Vec<f64>,
    /// Constituents replaced by their rank-1 projection.
    pub rank1_fallback: Vec<bool>,
    pub solver_iterations: Vec<usize>,
}

/// Solves the penalty-free program on `mask`, one target at a time, and
/// extracts rank-1 beamformers.
pub fn resolve_reduced(dp: &DesignProblem, mask: &SelectionMask, solver: &SolverSettings) -> Result<DesignResult> {
    if mask.count() == 0 {
        return Err(Error::Degenerate("empty support".into()));
    }
    let reduced = dp.restrict(mask)?;
    let solved: Vec<(HermitianMatrix, usize)> = (0..reduced.num_targets())
        .into_par_iter()
        .map(|l| {
            let single = DesignProblem {
                n: reduced.n,
                target_vectors: vec![reduced.target_vectors[l].clone()],
                amat: vec![reduced.amat[l].clone()],
                qmat: vec![reduced.qmat[l].clone()],
                scenario: reduced.scenario.clone(),
            };
            let (p, layout) = build_fixed_support(&single)?;
            let sol = conic::solve(&p, solver)?;
            if sol.status != SolveStatus::Optimal {
                return Err(Error::Numeric(format!(
                    "reduced program for target {l} ended with status {:?}",
                    sol.status
                )));
            }
            Ok((layout.constituent(&sol.x, 0), sol.iterations))
        })
        .collect::<Result<_>>()?;

    let mut constituents = Vec::new();
    let mut rank1_vectors = Vec::new();
    let mut rank_ratios = Vec::new();
    let mut rank1_fallback = Vec::new();
    let mut solver_iterations = Vec::new();
    for (l, (r_small, iters)) in solved.into_iter().enumerate() {
        let eig = eig_herm(&r_small)?;
        let ratio = if eig.values[0] > 0.0 {
            eig.values.get(1).map_or(0.0, |&v| v.max(0.0) / eig.values[0])
        } else {
            f64::INFINITY
        };
        let (lambda, v) = principal_eigpair(&r_small)?;
        let r_vec: Vec<Complex64> = v.iter().map(|z| z * lambda.max(0.0).sqrt()).collect();
        let fallback = ratio > RANK_RATIO_TOL;
        let r_small = if fallback {
            log::warn!("target {l}: rank ratio {ratio:.3e} above tolerance, using rank-1 projection");
            let proj = outer(&r_vec);
            let gain = proj.inner(&reduced.amat[l]);
            if gain < 1.0 && gain > 0.0 {
                proj.scaled(1.0 / gain)
            } else {
                proj
            }
        } else {
            r_small
        };
        let full_vec = {
            let mut out = vec![Complex64::new(0.0, 0.0); dp.n];
            for (k, idx) in mask.indices().into_iter().enumerate() {
                out[idx] = r_vec[k];
            }
            out
        };
        constituents.push(r_small.expand(mask)?);
        rank1_vectors.push(full_vec);
        rank_ratios.push(ratio);
        rank1_fallback.push(fallback);
        solver_iterations.push(iters);
    }
    let mut composite = HermitianMatrix::zeros(dp.n);
    for r in &constituents {
        composite = composite.add(r);
    }
    let objective = dp.objective(&constituents);
    Ok(DesignResult {
        mask: mask.clone(),
        constituents,
        composite,
        alpha: 1.0,
        objective,
        rank1_vectors,
        rank_ratios,
        rank1_fallback,
        solver_iterations,
    })
}

/// Sets `alpha = P_t / Tr(R)`.
pub fn scale_power(mut result: DesignResult, total_power: f64) -> Result<DesignResult> {
    let tr = result.composite.trace();
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::Degenerate(format!("composite trace is {tr}")));
    }
    result.alpha = total_power / tr;
    Ok(result)
}

/// Full pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub outcome: SparseOutcome,
    pub result: DesignResult,
}

/// Sparsity search, reduced re-solve and power scaling.
pub fn design(dp: &DesignProblem, ctrl: &SparsityController, solver: &SolverSettings) -> Result<Design> {
    let outcome = sparse_design(dp, ctrl, solver)?;
    let result = resolve_reduced(dp, &outcome.mask, solver)?;
    let result = scale_power(result, dp.scenario.total_power)?;
    Ok(Design { outcome, result })
}

/// `svec` of the real embedding of `h`: the PSD slack the relaxed program
/// pairs with a constituent.
pub fn embedded_svec(h: &HermitianMatrix) -> Vec<f64> {
    svec(&crate::hermitian::embed_real(h))
}
