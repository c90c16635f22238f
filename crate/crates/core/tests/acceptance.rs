//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsebeam::conic::{
    self, cone_distance, kkt_residuals, project_cone, project_dual_cone, ConeBlock, ConeProgram, ConeSpec,
    SolveStatus, SolverSettings, SparseMatrix,
};
use sparsebeam::eval::{evaluate, Evaluation};
use sparsebeam::hermitian::min_eigenvalue;
use sparsebeam::oracle::{enumerate_best, fixed_support_optimum, nested_mask, oracle_design, ula_mask, DEFAULT_ENUMERATION_CAP};
use sparsebeam::sdr::{assemble, build_fixed_support, design, Design, DesignProblem, SparsityController};
use sparsebeam::{ArrayGrid, Direction, Scenario, SelectionMask};

const GAP_DB: f64 = 0.5;
const ENUM_SECONDS: f64 = 60.0;
const PIPELINE_SECONDS: f64 = 600.0;
const SWEEP_DEG: f64 = 0.25;
const SDR_DROOP_DB: f64 = 1.0;
const BASELINE_DROOP_DB: f64 = 1.5;
const SDR_CROSSCORR: f64 = 0.1;
const BASELINE_CROSSCORR: f64 = 0.3;
const EQUIVALENCE_INSTANCES: usize = 50;
const EQUIVALENCE_REL: f64 = 1e-5;
const EQUIVALENCE_SECONDS: f64 = 60.0;
const FUZZ_POINTS: usize = 10_000;
const MICRO_TOL: f64 = 1e-5;
const OFF_SUPPORT_REL: f64 = 1e-8;
const POWER_REL: f64 = 1e-10;
const RANK_RATIO: f64 = 1e-3;
const PSD_REL: f64 = 1e-8;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: usize, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("criterion {id}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn design_csv(d: &Design, s: &Scenario) -> Vec<u8> {
    let eval = evaluate("design", &d.result, s, SWEEP_DEG).unwrap();
    let mut out = Vec::new();
    eval.composite.write_csv(&mut out).unwrap();
    for p in &eval.constituents {
        p.write_csv(&mut out).unwrap();
    }
    out
}

fn baseline(dp: &DesignProblem, s: &Scenario, mask: &SelectionMask) -> Evaluation {
    evaluate("baseline", &oracle_design(dp, mask).unwrap(), s, SWEEP_DEG).unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng) -> (DesignProblem, SelectionMask) {
    let n = rng.gen_range(3..=8);
    let l = rng.gen_range(1..=3);
    let q = rng.gen_range(0..=3);
    let dir = |rng: &mut ChaCha8Rng| Direction::new(rng.gen_range(0.0..=180.0), rng.gen_range(0.2..3.0)).unwrap();
    let targets: Vec<Direction> = (0..l).map(|_| dir(rng)).collect();
    let undesired: Vec<Direction> = (0..q).map(|_| dir(rng)).collect();
    let k = rng.gen_range(1..=n);
    let mut idx: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    let s = Scenario::new(ArrayGrid::half_wavelength(n).unwrap(), targets, undesired, vec![1.0; l], k, 1.0).unwrap();
    (assemble(&s).unwrap(), SelectionMask::from_indices(n, &idx).unwrap())
}

fn micro_program(c: Vec<f64>, rows: usize, a: &[f64], b: Vec<f64>, blocks: Vec<ConeBlock>) -> ConeProgram {
    let cols = c.len();
    ConeProgram::new(
        c,
        SparseMatrix::from_dense(rows, cols, a).unwrap(),
        b,
        ConeSpec::new(blocks).unwrap(),
    )
    .unwrap()
}

/// `(program, analytic optimum)` for an LP, a trace-minimizing PSD program
/// and an SOC norm program.
fn micro_programs() -> Vec<(&'static str, ConeProgram, f64)> {
    let r2 = std::f64::consts::SQRT_2;
    vec![
        (
            "lp",
            // min x0 + 2 x1 s.t. x0 + x1 >= 2, x0 <= 1.5, x1 >= 0.
            micro_program(
                vec![1.0, 2.0],
                3,
                &[-1.0, -1.0, 1.0, 0.0, 0.0, -1.0],
                vec![-2.0, 1.5, 0.0],
                vec![ConeBlock::NonNeg(3)],
            ),
            2.5,
        ),
        (
            "psd",
            // min Tr X s.t. X00 = 1, X11 = 4, X ⪰ 0 over 2x2 X.
            micro_program(
                vec![1.0, 0.0, 1.0],
                5,
                &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -r2, 0.0, 0.0, 0.0, -1.0],
                vec![1.0, 4.0, 0.0, 0.0, 0.0],
                vec![ConeBlock::Zero(2), ConeBlock::PsdTriangle(2)],
            ),
            5.0,
        ),
        (
            "soc",
            // min t s.t. u = 3, v = 4, ‖(u, v)‖ <= t.
            micro_program(
                vec![1.0, 0.0, 0.0],
                5,
                &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
                vec![3.0, 4.0, 0.0, 0.0, 0.0],
                vec![ConeBlock::Zero(2), ConeBlock::SecondOrder(3)],
            ),
            5.0,
        ),
    ]
}

fn criterion_4_and_kkt(report: &mut Report, kkt_failures: &mut usize, optimal_exits: &mut usize) {
    let settings = SolverSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failed = 0;
    for _ in 0..EQUIVALENCE_INSTANCES {
        let (dp, mask) = random_instance(&mut rng);
        let oracle = fixed_support_optimum(&dp, &mask).unwrap().value;
        let reduced = dp.restrict(&mask).unwrap();
        let (p, layout) = build_fixed_support(&reduced).unwrap();
        let sol = conic::solve(&p, &settings).unwrap();
        if sol.status != SolveStatus::Optimal {
            failed += 1;
            continue;
        }
        *optimal_exits += 1;
        if !kkt_residuals(&p, &sol.x, &sol.y, &sol.s, &settings).converged() {
            *kkt_failures += 1;
        }
        let constituents: Vec<_> = (0..reduced.num_targets()).map(|l| layout.constituent(&sol.x, l)).collect();
        let conic_value = reduced.objective(&constituents);
        worst = worst.max((conic_value - oracle).abs() / oracle);
    }
    let secs = start.elapsed().as_secs_f64();
    report.line(
        4,
        failed == 0 && worst <= EQUIVALENCE_REL && secs < EQUIVALENCE_SECONDS,
        format!(
            "{EQUIVALENCE_INSTANCES} instances, max relative error {worst:.2e} (<= {EQUIVALENCE_REL:.0e}), \
             non-optimal solves {failed}, {secs:.1}s"
        ),
    );
}

fn fuzz_cones(rng: &mut ChaCha8Rng) -> (usize, f64, f64, f64) {
    let spec = ConeSpec::new(vec![
        ConeBlock::Zero(2),
        ConeBlock::NonNeg(4),
        ConeBlock::SecondOrder(3),
        ConeBlock::SecondOrder(6),
        ConeBlock::PsdTriangle(3),
        ConeBlock::PsdTriangle(6),
    ])
    .unwrap();
    let dim = spec.total_dim();
    let (mut idem, mut polar, mut comp) = (0.0f64, 0.0f64, 0.0f64);
    let mut others: Vec<Vec<f64>> = Vec::new();
    for k in 0..FUZZ_POINTS {
        let scale = 10f64.powi(rng.gen_range(-3..=3));
        let v: Vec<f64> = (0..dim).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let p = project_cone(&v, &spec);
        idem = idem.max(cone_distance(&p, &spec) / norm);
        // v − p lies in the polar cone, i.e. p − v lies in the dual cone.
        let w: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a - b).collect();
        let wd = project_dual_cone(&w, &spec);
        polar = polar.max(w.iter().zip(&wd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / norm);
        comp = comp.max(w.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>().abs() / (norm * norm));
        // Variational inequality against earlier cone points.
        if k % 10 == 0 {
            others.push(p.clone());
        }
        if let Some(u) = others.get(k % others.len().max(1)) {
            let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ip: f64 = v.iter().zip(&p).zip(u).map(|((vi, pi), ui)| (vi - pi) * ui).sum();
            comp = comp.max((ip / (norm * un.max(1e-300))).max(0.0));
        }
    }
    (FUZZ_POINTS, idem, polar, comp)
}

fn main() {
    let mut report = Report { failures: 0 };
    let scenario = Scenario::reference();
    let dp = assemble(&scenario).unwrap();
    let ctrl = SparsityController::default();
    let settings = SolverSettings::default();

    // 1: optimality gap.
    let t = Instant::now();
    let enumeration = enumerate_best(&dp, scenario.budget_p, DEFAULT_ENUMERATION_CAP).unwrap();
    let enum_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let d = design(&dp, &ctrl, &settings).unwrap();
    let design_secs = t.elapsed().as_secs_f64();
    let gap = db(d.result.objective / enumeration.best.value);
    report.line(
        1,
        d.result.mask.count() == scenario.budget_p
            && enumeration.table.len() == 43758
            && gap < GAP_DB
            && enum_secs < ENUM_SECONDS
            && design_secs < PIPELINE_SECONDS,
        format!(
            "mask {} gap {gap:.4} dB (< {GAP_DB}) vs best {} over {} subsets; enumeration {enum_secs:.2}s, pipeline {design_secs:.1}s",
            d.result.mask,
            enumeration.best.mask,
            enumeration.table.len()
        ),
    );

    // 2 and 3: droop and cross-correlation.
    let sdr = evaluate("design", &d.result, &scenario, SWEEP_DEG).unwrap();
    let ula = baseline(&dp, &scenario, &ula_mask(18, 10).unwrap());
    let nested_layout = nested_mask(18, 10).unwrap();
    let nested = baseline(&dp, &scenario, &nested_layout);
    report.line(
        2,
        sdr.droop_db < SDR_DROOP_DB && ula.droop_db >= BASELINE_DROOP_DB && nested.droop_db >= BASELINE_DROOP_DB,
        format!(
            "design {:.3} dB (< {SDR_DROOP_DB}), ula {:.3} dB (>= {BASELINE_DROOP_DB}), nested {} {:.3} dB (>= {BASELINE_DROOP_DB})",
            sdr.droop_db, ula.droop_db, nested_layout, nested.droop_db
        ),
    );
    let cc = |e: &Evaluation, a, b| e.crosscorr.value(a, b).unwrap();
    report.line(
        3,
        cc(&sdr, 0, 1) < SDR_CROSSCORR
            && cc(&sdr, 0, 2) < SDR_CROSSCORR
            && cc(&ula, 0, 1) >= BASELINE_CROSSCORR
            && cc(&nested, 0, 1) >= BASELINE_CROSSCORR,
        format!(
            "design 1-2 {:.4} 1-3 {:.4} (< {SDR_CROSSCORR}), ula 1-2 {:.4}, nested 1-2 {:.4} (>= {BASELINE_CROSSCORR})",
            cc(&sdr, 0, 1),
            cc(&sdr, 0, 2),
            cc(&ula, 0, 1),
            cc(&nested, 0, 1)
        ),
    );

    // 4: oracle against the conic solver.
    let mut kkt_failures = 0;
    let mut optimal_exits = 0;
    criterion_4_and_kkt(&mut report, &mut kkt_failures, &mut optimal_exits);

    // 5: solver property suite.
    let mut micro_err = 0.0f64;
    for (_, p, optimum) in micro_programs() {
        let sol = conic::solve(&p, &settings).unwrap();
        if sol.status == SolveStatus::Optimal {
            optimal_exits += 1;
            if !kkt_residuals(&p, &sol.x, &sol.y, &sol.s, &settings).converged() {
                kkt_failures += 1;
            }
            micro_err = micro_err.max((sol.objective - optimum).abs());
        } else {
            micro_err = f64::INFINITY;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (points, idem, polar, comp) = fuzz_cones(&mut rng);
    let tol = 1e-9;
    report.line(
        5,
        kkt_failures == 0 && micro_err <= MICRO_TOL && idem <= tol && polar <= tol && comp <= tol,
        format!(
            "kkt recheck {}/{optimal_exits} optimal exits; micro-program error {micro_err:.1e} (<= {MICRO_TOL:.0e}); \
             {points} fuzzed points: idempotence {idem:.1e}, polar {polar:.1e}, variational {comp:.1e} (<= {tol:.0e})",
            optimal_exits - kkt_failures
        ),
    );

    // 6: structure of the resolved design.
    let r = &d.result;
    let support = r.mask.indices();
    let mut same_support = true;
    let mut off_support = 0.0f64;
    for rl in &r.constituents {
        let n = rl.dim();
        let active: Vec<usize> = (0..n).filter(|&k| rl.get(k, k).re > 0.0).collect();
        same_support &= active == support;
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if !(r.mask.is_active(i) && r.mask.is_active(j)) {
                    off += rl.get(i, j).norm_sqr();
                }
            }
        }
        off_support = off_support.max(off.sqrt() / rl.frobenius_norm());
    }
    let lambda_min = min_eigenvalue(&r.composite).unwrap();
    let composite_psd = lambda_min >= -PSD_REL * r.composite.trace();
    let power_err = (r.alpha * r.composite.trace() - scenario.total_power).abs() / scenario.total_power;
    let ranks_ok = r
        .rank_ratios
        .iter()
        .zip(&r.rank1_fallback)
        .all(|(&ratio, &fb)| ratio <= RANK_RATIO || fb);
    let max_ratio = r.rank_ratios.iter().copied().fold(0.0, f64::max);
    report.line(
        6,
        same_support && off_support <= OFF_SUPPORT_REL && composite_psd && power_err <= POWER_REL && ranks_ok,
        format!(
            "shared support {same_support}, off-support mass {off_support:.1e} (<= {OFF_SUPPORT_REL:.0e}), \
             min eigenvalue {lambda_min:.1e} (>= -{PSD_REL:.0e} trace), power error {power_err:.1e} (<= {POWER_REL:.0e}), \
             max rank ratio {max_ratio:.1e} (<= {RANK_RATIO:.0e}), fallbacks {:?}",
            r.rank1_fallback
        ),
    );

    // 7: determinism, with a different worker count the second time.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (d2, e2) = pool.install(|| {
        (
            design(&dp, &ctrl, &settings).unwrap(),
            enumerate_best(&dp, scenario.budget_p, DEFAULT_ENUMERATION_CAP).unwrap(),
        )
    });
    let csv = |e: &sparsebeam::oracle::Enumeration| {
        let mut out = Vec::new();
        e.write_csv(&mut out).unwrap();
        out
    };
    let same_mask = d.result.mask == d2.result.mask;
    let same_patterns = design_csv(&d, &scenario) == design_csv(&d2, &scenario);
    let same_table = csv(&enumeration) == csv(&e2);
    report.line(
        7,
        same_mask && same_patterns && same_table,
        format!("masks equal {same_mask}, pattern CSVs identical {same_patterns}, enumeration CSV identical {same_table}"),
    );

    println!("{} of 7 criteria passed", 7 - report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
