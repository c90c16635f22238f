//! ADMM operator splitting for the standard-form cone program.
//!
//! Each iteration solves one quasi-definite linear system through a cached
//! sparse `LDLᵀ` factor of the augmented KKT matrix, projects onto the cone, and
//! updates the scaled dual. The penalty `ρ` adapts to the primal/dual
//! residual balance; every change triggers a refactorization. Safeguarded
//! Anderson acceleration extrapolates the iterate between steps.

use super::anderson::Anderson;
use super::ldl::KktFactor;
use super::cones::{cone_distance, project_cone_in_place, project_dual_cone, ConeBlock};
use super::{dot, inf_norm, kkt_residuals_with, ConeProgram, ConeSolution, SolveStatus, SolverSettings, SparseMatrix};
use crate::error::{Error, Result};

const SIGMA: f64 = 1e-6;
const RHO_ZERO_CONE_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// Imbalance ratio that triggers a penalty update.
const RHO_TRIGGER: f64 = 5.0;
/// Largest factor by which one update may change the penalty.
const RHO_MAX_STEP: f64 = 10.0;
const RUIZ_ITERS: usize = 15;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;
const INFEASIBLE_TOL: f64 = 1e-6;
/// An extrapolated step is rejected when its fixed-point residual exceeds
/// the plain step's by this factor.
const SAFEGUARD: f64 = 2.0;

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    cost: f64,
}

impl Scaling {
    fn identity(n: usize, m: usize) -> Self {
        Scaling {
            d: vec![1.0; n],
            e: vec![1.0; m],
            cost: 1.0,
        }
    }
}

/// Ruiz equilibration. Row scales are forced constant across each
/// second-order and PSD block so the scaled slack stays in the same cone.
fn equilibrate(p: &ConeProgram) -> (SparseMatrix, Scaling) {
    let n = p.num_vars();
    let m = p.num_rows();
    let mut a = p.a.clone();
    let mut sc = Scaling::identity(n, m);
    for _ in 0..RUIZ_ITERS {
        let mut col = vec![0.0f64; n];
        let mut row = vec![0.0f64; m];
        for (r, rn) in row.iter_mut().enumerate() {
            for (c, v) in a.row(r) {
                let av = v.abs();
                *rn = rn.max(av);
                col[c] = col[c].max(av);
            }
        }
        let dstep: Vec<f64> = col.iter().map(|&v| if v > 1e-10 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        let mut estep: Vec<f64> = row.iter().map(|&v| if v > 1e-10 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        for (off, block) in p.cones.spans() {
            if matches!(block, ConeBlock::SecondOrder(_) | ConeBlock::PsdTriangle(_)) {
                let span = off..off + block.dim();
                let nonzero: Vec<f64> = row[span.clone()].iter().copied().filter(|&v| v > 1e-10).collect();
                let f = if nonzero.is_empty() {
                    1.0
                } else {
                    1.0 / (nonzero.iter().sum::<f64>() / nonzero.len() as f64).sqrt()
                };
                estep[span].fill(f);
            }
        }
        let mut dapplied = vec![1.0; n];
        let mut eapplied = vec![1.0; m];
        for j in 0..n {
            let next = (sc.d[j] * dstep[j]).clamp(SCALE_MIN, SCALE_MAX);
            dapplied[j] = next / sc.d[j];
            sc.d[j] = next;
        }
        for i in 0..m {
            let next = (sc.e[i] * estep[i]).clamp(SCALE_MIN, SCALE_MAX);
            eapplied[i] = next / sc.e[i];
            sc.e[i] = next;
        }
        a.scale(&eapplied, &dapplied);
    }
    let cn = p.c.iter().zip(&sc.d).map(|(c, d)| (c * d).abs()).fold(0.0, f64::max);
    sc.cost = if cn > 1e-12 { (1.0 / cn).clamp(SCALE_MIN, SCALE_MAX) } else { 1.0 };
    (a, sc)
}

fn rho_vector(rho: f64, zero_rows: &[bool]) -> Vec<f64> {
    zero_rows
        .iter()
        .map(|&z| if z { rho * RHO_ZERO_CONE_FACTOR } else { rho })
        .collect()
}

/// Solves `p` with ADMM from a zero start. Identical inputs give
/// bitwise-identical outputs.
pub fn solve(p: &ConeProgram, settings: &SolverSettings) -> Result<ConeSolution> {
    solve_warm(p, settings, None)
}

/// Solves `p` starting from the primal/dual point and penalty of an earlier
/// solution of a program with the same shape.
pub fn solve_warm(p: &ConeProgram, settings: &SolverSettings, warm: Option<&ConeSolution>) -> Result<ConeSolution> {
    p.validate()?;
    if let Some(w) = warm {
        if w.x.len() != p.num_vars() || w.s.len() != p.num_rows() || w.y.len() != p.num_rows() {
            return Err(Error::Dimension("warm start does not match the program shape".into()));
        }
    }
    settings.validate()?;
    let n = p.num_vars();
    let m = p.num_rows();

    let (a, sc) = if settings.scaling_enabled {
        equilibrate(p)
    } else {
        (p.a.clone(), Scaling::identity(n, m))
    };
    let at = a.transpose();
    let at_orig = p.a.transpose();
    let c: Vec<f64> = (0..n).map(|j| sc.cost * sc.d[j] * p.c[j]).collect();
    let b: Vec<f64> = (0..m).map(|i| sc.e[i] * p.b[i]).collect();

    let mut zero_rows = vec![false; m];
    for (off, block) in p.cones.spans() {
        if matches!(block, ConeBlock::Zero(_)) {
            zero_rows[off..off + block.dim()].fill(true);
        }
    }

    let mut rho = warm.map_or(settings.rho, |w| w.rho);
    let mut rho_vec = rho_vector(rho, &zero_rows);
    let mut kkt = KktFactor::new(&a, SIGMA, &rho_vec)?;
    let mut rho_updates = 0;

    let alpha = settings.over_relaxation;
    // Iterate z = (x, s, y); y lives in the polar cone and the reported
    // multiplier is its negation.
    let dim = n + 2 * m;
    let mut z = vec![0.0; dim];
    if let Some(w) = warm {
        for j in 0..n {
            z[j] = w.x[j] / sc.d[j];
        }
        for i in 0..m {
            z[n + i] = w.s[i] * sc.e[i];
            z[n + m + i] = -w.y[i] * sc.cost / sc.e[i];
        }
    }
    let mut z_in = z.clone();
    let mut z_acc = vec![0.0; dim];
    let mut tmp = vec![0.0; m];
    let mut rhs = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut ax = vec![0.0; m];
    let mut aty = vec![0.0; n];
    let mut v = vec![0.0; m];

    let mut accel = (settings.anderson_memory > 0).then(|| Anderson::new(dim, settings.anderson_memory));
    // Plain image and residual norm of the last step before extrapolating.
    let mut pending: Option<(Vec<f64>, f64)> = None;

    let unscale = |z: &[f64]| {
        let xu: Vec<f64> = z[..n].iter().zip(&sc.d).map(|(x, d)| x * d).collect();
        let su: Vec<f64> = z[n..n + m].iter().zip(&sc.e).map(|(s, e)| s / e).collect();
        let yu: Vec<f64> = z[n + m..].iter().zip(&sc.e).map(|(y, e)| -y * e / sc.cost).collect();
        (xu, su, yu)
    };

    let mut last = None;
    for k in 1..=settings.max_iters {
        z_in.copy_from_slice(&z);
        {
            let (x, rest) = z.split_at_mut(n);
            let (s, y) = rest.split_at_mut(m);
            for i in 0..m {
                tmp[i] = b[i] - s[i] + y[i] / rho_vec[i];
            }
            for j in 0..n {
                rhs[j] = SIGMA * x[j] - c[j];
            }
            kkt.solve(&rhs, &tmp, &mut xt);
            a.mul_vec(&xt, &mut ax);
            for i in 0..m {
                v[i] = alpha * (b[i] - ax[i]) + (1.0 - alpha) * s[i];
                s[i] = v[i] + y[i] / rho_vec[i];
            }
            for j in 0..n {
                x[j] = alpha * xt[j] + (1.0 - alpha) * x[j];
            }
            project_cone_in_place(s, &p.cones)?;
            for i in 0..m {
                y[i] += rho_vec[i] * (v[i] - s[i]);
            }
        }
        if !z.iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite { iteration: k });
        }

        let mut extrapolate = true;
        if let Some((plain, plain_norm)) = pending.take() {
            let norm = z.iter().zip(&z_in).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if norm > SAFEGUARD * plain_norm {
                z.copy_from_slice(&plain);
                z_in.copy_from_slice(&plain);
                if let Some(aa) = accel.as_mut() {
                    aa.reset();
                }
                extrapolate = false;
            }
        }

        if k % settings.check_interval == 0 || k == settings.max_iters {
            let (xu, su, yu) = unscale(&z);
            let res = kkt_residuals_with(p, &at_orig, &xu, &yu, &su, settings);
            let status = if res.converged() {
                Some(SolveStatus::Optimal)
            } else {
                detect_infeasibility(p, &at_orig, &sc, n, &z, &z_in)
            };
            if let Some(status) = status {
                return Ok(ConeSolution {
                    status,
                    objective: dot(&p.c, &xu),
                    x: xu,
                    y: yu,
                    s: su,
                    primal_residual: res.primal,
                    dual_residual: res.dual,
                    gap: res.gap,
                    iterations: k,
                    rho_updates,
                    rho,
                });
            }
            last = Some((xu, su, yu, res));

            if settings.adaptive_rho {
                let (x, rest) = z.split_at(n);
                let (s, y) = rest.split_at(m);
                a.mul_vec(x, &mut ax);
                at.mul_vec(y, &mut aty);
                let prim = ax
                    .iter()
                    .zip(s)
                    .zip(&b)
                    .map(|((a, s), b)| (a + s - b).abs())
                    .fold(0.0, f64::max)
                    / inf_norm(&ax).max(inf_norm(s)).max(inf_norm(&b)).max(1e-12);
                let dual = c
                    .iter()
                    .zip(&aty)
                    .map(|(c, a)| (c - a).abs())
                    .fold(0.0, f64::max)
                    / inf_norm(&aty).max(inf_norm(&c)).max(1e-12);
                if prim > 0.0 && dual > 0.0 {
                    let proposal = (rho * (prim / dual).sqrt())
                        .clamp(rho / RHO_MAX_STEP, rho * RHO_MAX_STEP)
                        .clamp(RHO_MIN, RHO_MAX);
                    if proposal > rho * RHO_TRIGGER || proposal < rho / RHO_TRIGGER {
                        rho = proposal;
                        rho_vec = rho_vector(rho, &zero_rows);
                        kkt.update_rho(&rho_vec)?;
                        rho_updates += 1;
                        if let Some(aa) = accel.as_mut() {
                            aa.reset();
                        }
                        extrapolate = false;
                    }
                }
            }
        }

        if let (true, Some(aa)) = (extrapolate, accel.as_mut()) {
            if aa.step(&z_in, &z, &mut z_acc) {
                let norm = z.iter().zip(&z_in).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                pending = Some((z.clone(), norm));
                z.copy_from_slice(&z_acc);
            }
        }
    }

    let (xu, su, yu, res) = last.expect("at least one residual check runs");
    Ok(ConeSolution {
        status: SolveStatus::MaxIters,
        objective: dot(&p.c, &xu),
        x: xu,
        y: yu,
        s: su,
        primal_residual: res.primal,
        dual_residual: res.dual,
        gap: res.gap,
        iterations: settings.max_iters,
        rho_updates,
        rho,
    })
}

/// Certificate checks on the last iterate difference: a dual ray `δy ∈ K*`
/// with `Aᵀδy = 0`, `bᵀδy < 0` proves primal infeasibility; a primal ray
/// with `−Aδx ∈ K`, `cᵀδx < 0` proves unboundedness.
fn detect_infeasibility(
    p: &ConeProgram,
    at_orig: &SparseMatrix,
    sc: &Scaling,
    n: usize,
    z: &[f64],
    z_prev: &[f64],
) -> Option<SolveStatus> {
    let m = p.num_rows();
    let (x, y) = (&z[..n], &z[n + m..]);
    let (x_prev, y_prev) = (&z_prev[..n], &z_prev[n + m..]);
    let dy: Vec<f64> = y
        .iter()
        .zip(y_prev)
        .zip(&sc.e)
        .map(|((a, b), e)| -(a - b) * e)
        .collect();
    let ny = inf_norm(&dy);
    if ny > 0.0 {
        let aty = at_orig.apply(&dy);
        let in_dual = project_dual_cone(&dy, &p.cones)
            .iter()
            .zip(&dy)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if inf_norm(&aty) <= INFEASIBLE_TOL * ny
            && dot(&p.b, &dy) <= -INFEASIBLE_TOL * ny
            && in_dual <= INFEASIBLE_TOL * ny
        {
            return Some(SolveStatus::Infeasible);
        }
    }
    let dx: Vec<f64> = x
        .iter()
        .zip(x_prev)
        .zip(&sc.d)
        .map(|((a, b), d)| (a - b) * d)
        .collect();
    let nx = inf_norm(&dx);
    if nx > 0.0 {
        let neg_adx: Vec<f64> = p.a.apply(&dx).iter().map(|v| -v).collect();
        if dot(&p.c, &dx) <= -INFEASIBLE_TOL * nx && cone_distance(&neg_adx, &p.cones) <= INFEASIBLE_TOL * nx {
            return Some(SolveStatus::Unbounded);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::super::{kkt_residuals, ConeSpec};
    use super::*;

    fn program(c: Vec<f64>, rows: usize, a: &[f64], b: Vec<f64>, blocks: Vec<ConeBlock>) -> ConeProgram {
        let cols = c.len();
        ConeProgram::new(
            c,
            SparseMatrix::from_dense(rows, cols, a).unwrap(),
            b,
            ConeSpec::new(blocks).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn lp_lower_bound() {
        // min x  s.t.  x >= 1   ⇔   -x + s = -1, s >= 0.
        let p = program(vec![1.0], 1, &[-1.0], vec![-1.0], vec![ConeBlock::NonNeg(1)]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-5);
        assert!((sol.objective - 1.0).abs() < 1e-5);
    }

    #[test]
    fn psd_trace_min() {
        // X = [[x0, x1], [x1, x2]]; svec = (x0, √2 x1, x2).
        // min x0 + x2  s.t. x0 = 1, X ⪰ 0.
        let r2 = std::f64::consts::SQRT_2;
        #[rustfmt::skip]
        let a = [
            1.0, 0.0, 0.0,
            -1.0, 0.0, 0.0,
            0.0, -r2, 0.0,
            0.0, 0.0, -1.0,
        ];
        let p = program(
            vec![1.0, 0.0, 1.0],
            4,
            &a,
            vec![1.0, 0.0, 0.0, 0.0],
            vec![ConeBlock::Zero(1), ConeBlock::PsdTriangle(2)],
        );
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-5);
        assert!((sol.x[0] - 1.0).abs() < 1e-5);
        assert!(sol.x[1].abs() < 1e-5 && sol.x[2].abs() < 1e-5);
    }

    #[test]
    fn soc_pythagoras() {
        // Variables (t, u, v): min t s.t. u = 3, v = 4, (t, u, v) ∈ SOC.
        #[rustfmt::skip]
        let a = [
            0.0, 1.0, 0.0,
            0.0, 0.0, 1.0,
            -1.0, 0.0, 0.0,
            0.0, -1.0, 0.0,
            0.0, 0.0, -1.0,
        ];
        let p = program(
            vec![1.0, 0.0, 0.0],
            5,
            &a,
            vec![3.0, 4.0, 0.0, 0.0, 0.0],
            vec![ConeBlock::Zero(2), ConeBlock::SecondOrder(3)],
        );
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let oracle = (3.0f64 * 3.0 + 4.0 * 4.0).sqrt();
        assert!((sol.x[0] - oracle).abs() < 1e-5);
    }

    #[test]
    fn infeasible_lp() {
        // x >= 1 and x <= 0.
        let p = program(vec![1.0], 2, &[-1.0, 1.0], vec![-1.0, 0.0], vec![ConeBlock::NonNeg(2)]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_lp() {
        // min x s.t. x <= 1.
        let p = program(vec![1.0], 1, &[1.0], vec![1.0], vec![ConeBlock::NonNeg(1)]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let bad = ConeProgram {
            c: vec![1.0, 2.0],
            a: SparseMatrix::from_dense(1, 1, &[1.0]).unwrap(),
            b: vec![1.0],
            cones: ConeSpec::new(vec![ConeBlock::NonNeg(1)]).unwrap(),
        };
        assert!(matches!(solve(&bad, &SolverSettings::default()), Err(Error::Dimension(_))));
    }

    #[test]
    fn optimal_exit_passes_recomputed_kkt() {
        let p = program(vec![1.0], 1, &[-1.0], vec![-1.0], vec![ConeBlock::NonNeg(1)]);
        let st = SolverSettings::default();
        let sol = solve(&p, &st).unwrap();
        assert!(kkt_residuals(&p, &sol.x, &sol.y, &sol.s, &st).converged());
    }

    #[test]
    fn unscaled_solve_agrees() {
        let p = program(vec![1.0], 1, &[-1.0], vec![-1.0], vec![ConeBlock::NonNeg(1)]);
        let st = SolverSettings {
            scaling_enabled: false,
            ..SolverSettings::default()
        };
        let sol = solve(&p, &st).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-5);
    }
}
