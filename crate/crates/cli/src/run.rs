//! Command implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sparsebeam::eval::{evaluate, Evaluation};
use sparsebeam::oracle::{enumerate_best, nested_mask, oracle_design, random_mask, ula_mask, Enumeration};
use sparsebeam::sdr::{assemble, resolve_reduced, scale_power, sparse_design, DesignProblem, DesignResult};
use sparsebeam::{Error, RunConfig, SelectionMask};

use crate::report::{
    db_ratio, BaselineSummary, DesignSummary, EnumerationSummary, PatternMetrics, RunReport, SolverStats,
    SparsitySummary, Timings,
};
use crate::{Layout, Options};

/// How a command that produced its artifacts finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The budget was met by trimming, or a constituent fell back to its
    /// rank-1 projection.
    Fallback,
}

fn artifact(out: &Path, stem: &str, tag: &str, ext: &str) -> PathBuf {
    if tag.is_empty() {
        out.join(format!("{stem}.{ext}"))
    } else {
        out.join(format!("{stem}_{tag}.{ext}"))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_evaluation(out: &Path, tag: &str, eval: &Evaluation) -> Result<()> {
    let mut w = create(&artifact(out, "beampattern_composite", tag, "csv"))?;
    eval.composite.write_csv(&mut w)?;
    w.flush()?;
    for (l, pattern) in eval.constituents.iter().enumerate() {
        let mut w = create(&artifact(out, &format!("beampattern_target_{l}"), tag, "csv"))?;
        pattern.write_csv(&mut w)?;
        w.flush()?;
    }
    write_json(&artifact(out, "crosscorr", tag, "json"), &eval.crosscorr)
}

/// Loads the config (or the built-in reference scenario) and applies flag
/// overrides.
pub fn load_config(opts: &Options) -> Result<RunConfig> {
    let mut cfg = match &opts.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::reference(),
    };
    if let Some(v) = opts.seed {
        cfg.seed = v;
    }
    if let Some(v) = opts.sweep_deg {
        cfg.sweep_deg = v;
    }
    if let Some(v) = opts.mu_lower {
        cfg.controller.mu_lower = v;
    }
    if let Some(v) = opts.mu_upper {
        cfg.controller.mu_upper = v;
    }
    if let Some(v) = opts.gamma {
        cfg.controller.gamma = v;
    }
    if let Some(v) = opts.epsilon {
        cfg.controller.epsilon = v;
    }
    if let Some(v) = opts.tol {
        cfg.solver = cfg.solver.with_tolerance(v);
    }
    if let Some(v) = opts.max_iters {
        cfg.solver.max_iters = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn new_report(command: &str, tag: &str, cfg: &RunConfig, design: DesignSummary) -> RunReport {
    RunReport {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        tag: tag.into(),
        config: cfg.clone(),
        design,
        sparsity: None,
        enumeration: None,
        baselines: Vec::new(),
        solver: SolverStats::default(),
        timings: Timings::default(),
        warnings: Vec::new(),
    }
}

fn design_summary(
    result: &DesignResult,
    cfg: &RunConfig,
    eval: &Evaluation,
    enumeration: Option<&EnumerationSummary>,
) -> DesignSummary {
    DesignSummary {
        mask: result.mask.bits(),
        indices: result.mask.indices(),
        objective: result.objective,
        objective_db_vs_enum: enumeration.map(|e| db_ratio(result.objective, e.best_value)),
        alpha: result.alpha,
        rank_ratios: result.rank_ratios.clone(),
        rank1_fallback: result.rank1_fallback.clone(),
        metrics: PatternMetrics::new(result, cfg, eval),
    }
}

fn enumeration_summary(e: &Enumeration) -> EnumerationSummary {
    EnumerationSummary {
        subsets: e.table.len(),
        best_mask: e.best.mask.bits(),
        best_value: e.best.value,
        worst_mask: e.worst.mask.bits(),
        worst_value: e.worst.value,
    }
}

fn baseline(
    name: &str,
    dp: &DesignProblem,
    cfg: &RunConfig,
    mask: &SelectionMask,
    enumeration: Option<&EnumerationSummary>,
) -> Result<(BaselineSummary, DesignResult, Evaluation)> {
    let result = oracle_design(dp, mask)?;
    let eval = evaluate(name, &result, &cfg.scenario, cfg.sweep_deg)?;
    let summary = BaselineSummary {
        name: name.into(),
        mask: mask.bits(),
        value: result.objective,
        value_db_vs_best: enumeration.map(|e| db_ratio(result.objective, e.best_value)),
        metrics: PatternMetrics::new(&result, cfg, &eval),
    };
    Ok((summary, result, eval))
}

fn layout_mask(which: Layout, n: usize, p: usize, seed: u64, explicit: Option<&str>) -> Result<SelectionMask> {
    Ok(match which {
        Layout::Ula => ula_mask(n, p)?,
        Layout::Nested => nested_mask(n, p)?,
        Layout::Random => random_mask(n, p, seed)?,
        Layout::Mask => {
            let text = explicit.context("`--mask` is required for an explicit layout")?;
            let mask: SelectionMask = if text.contains(',') && !text.contains(':') {
                format!("{n}:{text}").parse()?
            } else {
                text.parse()?
            };
            if mask.len() != n {
                bail!("mask has {} positions, grid has {n}", mask.len());
            }
            mask
        }
    })
}

pub fn design(opts: &Options) -> Result<Status> {
    let start = Instant::now();
    let cfg = load_config(opts)?;
    prepare_out(&opts.out)?;
    let dp = assemble(&cfg.scenario)?;
    let mut timings = Timings::default();

    let t = Instant::now();
    let outcome = sparse_design(&dp, &cfg.controller, &cfg.solver)?;
    timings.sparsity = t.elapsed().as_secs_f64();
    let mut trace = create(&opts.out.join("trace.log"))?;
    for entry in &outcome.trace {
        serde_json::to_writer(&mut trace, entry)?;
        writeln!(trace)?;
    }
    trace.flush()?;

    let t = Instant::now();
    let result = scale_power(
        resolve_reduced(&dp, &outcome.mask, &cfg.solver)?,
        cfg.scenario.total_power,
    )?;
    timings.resolve = t.elapsed().as_secs_f64();

    let mut warnings = Vec::new();
    let t = Instant::now();
    let enumeration = match enumerate_best(&dp, cfg.scenario.budget_p, opts.cap) {
        Ok(e) => Some(enumeration_summary(&e)),
        Err(e @ Error::EnumerationCap { .. }) => {
            warnings.push(format!("enumeration skipped: {e}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    timings.enumeration = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let eval = evaluate("design", &result, &cfg.scenario, cfg.sweep_deg)?;
    write_evaluation(&opts.out, "", &eval)?;
    warnings.extend(eval.composite.warnings.iter().cloned());

    let (n, p) = (dp.n, cfg.scenario.budget_p);
    let mut layouts = vec![("ula", ula_mask(n, p)?)];
    match nested_mask(n, p) {
        Ok(m) => layouts.push(("nested", m)),
        Err(e) => warnings.push(format!("nested baseline skipped: {e}")),
    }
    layouts.push(("random", random_mask(n, p, cfg.seed)?));
    if let Some(e) = &enumeration {
        layouts.push(("best", e.best_mask.parse()?));
        layouts.push(("worst", e.worst_mask.parse()?));
    }
    let mut baselines = Vec::new();
    for (name, mask) in &layouts {
        baselines.push(baseline(name, &dp, &cfg, mask, enumeration.as_ref())?.0);
    }
    timings.evaluation = t.elapsed().as_secs_f64();

    let mut report = new_report("design", "", &cfg, design_summary(&result, &cfg, &eval, enumeration.as_ref()));
    report.sparsity = Some(SparsitySummary {
        mu_final: outcome.mu_final,
        trivial: outcome.trivial,
        trimmed: outcome.trimmed,
        monotonicity_violations: outcome.monotonicity_violations,
        relaxed_solves: outcome.trace.len(),
    });
    report.enumeration = enumeration;
    report.baselines = baselines;
    report.solver = SolverStats {
        relaxed_iterations: outcome.trace.iter().map(|t| t.iterations).sum(),
        resolve_iterations: result.solver_iterations.clone(),
    };
    if outcome.trimmed {
        report.warnings.push("budget met by trimming the closest larger support".into());
    }
    for (l, &fb) in result.rank1_fallback.iter().enumerate() {
        if fb {
            report.warnings.push(format!("target {l} replaced by its rank-1 projection"));
        }
    }
    report.warnings.extend(warnings);
    timings.total = start.elapsed().as_secs_f64();
    report.timings = timings;
    write_json(&opts.out.join("result.json"), &result)?;
    write_json(&opts.out.join("report.json"), &report)?;

    println!("mask {} ({} of {})", result.mask, result.mask.count(), n);
    println!("objective {}", result.objective);
    if let Some(gap) = report.design.objective_db_vs_enum {
        println!("gap vs enumeration {gap:.4} dB");
    }
    println!("droop {:.4} dB", eval.droop_db);
    for pair in &eval.crosscorr.pairs {
        println!("crosscorr {}-{} {:.4}", pair.l, pair.lp, pair.value);
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let fallback = outcome.trimmed || result.rank1_fallback.iter().any(|&b| b);
    Ok(if fallback { Status::Fallback } else { Status::Ok })
}

#[derive(Debug, Serialize)]
struct EnumerationReport {
    #[serde(flatten)]
    summary: EnumerationSummary,
    design_mask: Option<String>,
    design_objective: Option<f64>,
    /// `10·log10(design_objective / best_value)`.
    design_gap_db: Option<f64>,
}

pub fn enumerate(opts: &Options) -> Result<Status> {
    let cfg = load_config(opts)?;
    prepare_out(&opts.out)?;
    let dp = assemble(&cfg.scenario)?;
    let e = enumerate_best(&dp, cfg.scenario.budget_p, opts.cap)?;
    let mut w = create(&opts.out.join("enumeration.csv"))?;
    e.write_csv(&mut w)?;
    w.flush()?;

    let summary = enumeration_summary(&e);
    let prior_path = opts.out.join("report.json");
    let prior = if prior_path.exists() {
        let prior = RunReport::read(&prior_path)?;
        if prior.config.scenario == cfg.scenario {
            Some(prior)
        } else {
            log::warn!("{} was produced for a different scenario; gap not reported", prior_path.display());
            None
        }
    } else {
        None
    };
    let report = EnumerationReport {
        design_gap_db: prior.as_ref().map(|r| db_ratio(r.design.objective, summary.best_value)),
        design_mask: prior.as_ref().map(|r| r.design.mask.clone()),
        design_objective: prior.as_ref().map(|r| r.design.objective),
        summary,
    };
    write_json(&opts.out.join("enumeration.json"), &report)?;

    println!("subsets {}", report.summary.subsets);
    println!("best {} {}", report.summary.best_mask, report.summary.best_value);
    println!("worst {} {}", report.summary.worst_mask, report.summary.worst_value);
    if let (Some(mask), Some(gap)) = (&report.design_mask, report.design_gap_db) {
        println!("design {mask} gap {gap:.4} dB");
    }
    Ok(Status::Ok)
}

pub fn baseline_cmd(opts: &Options, which: Layout, explicit: Option<&str>) -> Result<Status> {
    let start = Instant::now();
    let cfg = load_config(opts)?;
    prepare_out(&opts.out)?;
    let dp = assemble(&cfg.scenario)?;
    let mask = layout_mask(which, dp.n, cfg.scenario.budget_p, cfg.seed, explicit)?;
    let tag = which.tag();
    let (summary, result, eval) = baseline(tag, &dp, &cfg, &mask, None)?;
    write_evaluation(&opts.out, tag, &eval)?;
    write_json(&artifact(&opts.out, "result", tag, "json"), &result)?;

    let mut report = new_report("baseline", tag, &cfg, design_summary(&result, &cfg, &eval, None));
    report.warnings.extend(eval.composite.warnings.iter().cloned());
    report.timings.total = start.elapsed().as_secs_f64();
    report.timings.evaluation = report.timings.total;
    write_json(&artifact(&opts.out, "report", tag, "json"), &report)?;

    println!("{tag} mask {} value {}", summary.mask, summary.value);
    println!("droop {:.4} dB", summary.metrics.droop_db);
    for pair in &summary.metrics.crosscorr {
        println!("crosscorr {}-{} {:.4}", pair.l, pair.lp, pair.value);
    }
    Ok(Status::Ok)
}

pub fn eval_cmd(opts: &Options, from: Option<&Path>, tag: &str) -> Result<Status> {
    let from = from.unwrap_or(&opts.out);
    let report = RunReport::read(&artifact(from, "report", tag, "json"))?;
    let result_path = artifact(from, "result", tag, "json");
    let text = std::fs::read_to_string(&result_path).with_context(|| format!("reading {}", result_path.display()))?;
    let result: DesignResult =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", result_path.display()))?;
    if result.mask.bits() != report.design.mask {
        bail!("{} does not match the mask in its report", result_path.display());
    }
    let mut cfg = report.config;
    if let Some(v) = opts.sweep_deg {
        cfg.sweep_deg = v;
        cfg.validate()?;
    }
    prepare_out(&opts.out)?;
    let name = if tag.is_empty() { "design" } else { tag };
    let eval = evaluate(name, &result, &cfg.scenario, cfg.sweep_deg)?;
    write_evaluation(&opts.out, tag, &eval)?;
    println!("droop {:.4} dB", eval.droop_db);
    for pair in &eval.crosscorr.pairs {
        println!("crosscorr {}-{} {:.4}", pair.l, pair.lp, pair.value);
    }
    Ok(Status::Ok)
}
