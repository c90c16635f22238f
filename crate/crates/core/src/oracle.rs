//! Closed-form fixed-support optimum, exhaustive enumeration, and the
//! structured baseline layouts.
//!
//! On a fixed support the penalty-free problem decouples per target into
//! `min ⟨Q, R⟩ s.t. Tr(R a aᴴ) ≥ 1, R ⪰ 0`, whose optimum is the rank-one
//! `R = r rᴴ` with `r = Q⁻¹a / (aᴴQ⁻¹a)` and value `1/(aᴴQ⁻¹a)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::format_sig;
use crate::hermitian::{outer, HermitianMatrix};
use crate::model::SelectionMask;
use crate::sdr::{scale_power, DesignProblem, DesignResult};

/// Default ceiling on the number of enumerated subsets.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

const CHUNK: usize = 4096;

/// Significant digits kept when ordering enumeration values, so that values
/// equal up to rounding tie and fall back to mask order.
const TIE_DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub mask: SelectionMask,
    /// Sum of the per-target optimal values.
    pub value: f64,
    pub per_target_values: Vec<f64>,
    /// Optimal `r_l` on the support, in support order.
    pub per_target_vectors: Vec<Vec<Complex64>>,
}

fn restricted(dp: &DesignProblem, idx: &[usize], l: usize) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let k = idx.len();
    let q = DMatrix::from_fn(k, k, |i, j| dp.qmat[l].get(idx[i], idx[j]));
    let a = DVector::from_fn(k, |i, _| dp.target_vectors[l][idx[i]]);
    (q, a)
}

/// Per-target `(value, r)` on the sensors `idx`.
fn solve_support(dp: &DesignProblem, idx: &[usize], with_vectors: bool) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    let mut values = Vec::with_capacity(dp.num_targets());
    let mut vectors = Vec::new();
    for l in 0..dp.num_targets() {
        let (q, a) = restricted(dp, idx, l);
        let chol = q.cholesky().ok_or(Error::Singular { target: l })?;
        let z = chol.solve(&a);
        let denom = a.dotc(&z).re;
        if !(denom > 0.0 && denom.is_finite()) {
            return Err(Error::Singular { target: l });
        }
        let value = 1.0 / denom;
        values.push(value);
        if with_vectors {
            vectors.push(z.iter().map(|v| v * value).collect());
        }
    }
    Ok((values, vectors))
}

/// Exact optimum of the penalty-free program restricted to `mask`.
pub fn fixed_support_optimum(dp: &DesignProblem, mask: &SelectionMask) -> Result<OracleResult> {
    if mask.len() != dp.n {
        return Err(Error::Dimension(format!("mask has {} entries, grid has {}", mask.len(), dp.n)));
    }
    if mask.count() == 0 {
        return Err(Error::Degenerate("empty support".into()));
    }
    let (per_target_values, per_target_vectors) = solve_support(dp, &mask.indices(), true)?;
    Ok(OracleResult {
        mask: mask.clone(),
        value: per_target_values.iter().sum(),
        per_target_values,
        per_target_vectors,
    })
}

/// The oracle optimum on `mask` as a power-scaled design with constituents
/// `r_l r_lᴴ`.
pub fn oracle_design(dp: &DesignProblem, mask: &SelectionMask) -> Result<DesignResult> {
    let opt = fixed_support_optimum(dp, mask)?;
    let idx = mask.indices();
    let mut constituents = Vec::with_capacity(dp.num_targets());
    let mut rank1_vectors = Vec::with_capacity(dp.num_targets());
    let mut composite = HermitianMatrix::zeros(dp.n);
    for r in &opt.per_target_vectors {
        let mut full = vec![Complex64::new(0.0, 0.0); dp.n];
        for (k, &i) in idx.iter().enumerate() {
            full[i] = r[k];
        }
        let rl = outer(&full);
        composite = composite.add(&rl);
        constituents.push(rl);
        rank1_vectors.push(full);
    }
    let l = dp.num_targets();
    let result = DesignResult {
        mask: mask.clone(),
        constituents,
        composite,
        alpha: 1.0,
        objective: opt.value,
        rank1_vectors,
        rank_ratios: vec![0.0; l],
        rank1_fallback: vec![false; l],
        solver_iterations: vec![0; l],
    };
    scale_power(result, dp.scenario.total_power)
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
fn unrank(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        loop {
            let rest = binomial(n - next - 1, k - slot - 1);
            if rank < rest {
                break;
            }
            rank -= rest;
            next += 1;
        }
        out.push(next);
        next += 1;
    }
    out
}

/// Advances to the next subset in lexicographic order.
fn next_subset(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// One evaluated subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationRow {
    pub indices: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub best: OracleResult,
    pub worst: OracleResult,
    /// Every subset, ascending by value, ties in lexicographic mask order.
    pub table: Vec<EnumerationRow>,
    pub n: usize,
}

fn tie_key(v: f64) -> f64 {
    format!("{:.*e}", TIE_DIGITS - 1, v).parse().unwrap_or(v)
}

/// Evaluates every `p`-subset of the grid.
pub fn enumerate_best(dp: &DesignProblem, p: usize, cap: u64) -> Result<Enumeration> {
    if p == 0 || p > dp.n {
        return Err(Error::validation("budget_p", format!("must lie in [1, {}], got {p}", dp.n)));
    }
    let count = binomial(dp.n, p);
    if count > cap as u128 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let total = count as usize;
    let chunks = total.div_ceil(CHUNK);
    let rows: Vec<Vec<EnumerationRow>> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let start = ch * CHUNK;
            let len = CHUNK.min(total - start);
            let mut c = unrank(dp.n, p, start as u128);
            let mut out = Vec::with_capacity(len);
            for i in 0..len {
                let (values, _) = solve_support(dp, &c, false)?;
                out.push(EnumerationRow {
                    indices: c.clone(),
                    value: values.iter().sum(),
                });
                if i + 1 < len {
                    next_subset(&mut c, dp.n);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut keyed: Vec<(f64, EnumerationRow)> = rows.into_iter().flatten().map(|r| (tie_key(r.value), r)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.indices.cmp(&b.1.indices)));
    let top = keyed.last().expect("at least one subset").0;
    let worst_row = keyed
        .iter()
        .find(|(k, _)| *k == top)
        .map(|(_, r)| r.clone())
        .expect("at least one subset");
    let table: Vec<EnumerationRow> = keyed.into_iter().map(|(_, r)| r).collect();
    let best = fixed_support_optimum(dp, &SelectionMask::from_indices(dp.n, &table[0].indices)?)?;
    let worst = fixed_support_optimum(dp, &SelectionMask::from_indices(dp.n, &worst_row.indices)?)?;
    Ok(Enumeration {
        best,
        worst,
        table,
        n: dp.n,
    })
}

impl Enumeration {
    /// CSV with columns `mask_bits,value,value_db_rel_best`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "mask_bits,value,value_db_rel_best")?;
        let best = self.best.value;
        for row in &self.table {
            let mask = SelectionMask::from_indices(self.n, &row.indices).expect("indices in range");
            let db = 10.0 * (row.value / best).log10();
            writeln!(w, "{},{},{}", mask.bits(), format_sig(row.value), format_sig(db))?;
        }
        Ok(())
    }
}

/// The first `p` contiguous positions.
pub fn ula_mask(n: usize, p: usize) -> Result<SelectionMask> {
    check_budget(n, p)?;
    SelectionMask::from_indices(n, &(0..p).collect::<Vec<_>>())
}

/// Two-level nested array.
///
/// Starts from `N1 = ⌈p/2⌉` dense positions `0..N1` and `N2 = p − N1`
/// sparse positions `(N1+1)·k − 1`, `k = 1..=N2`. While the last sparse
/// position falls outside the grid, one sensor moves from the sparse to the
/// dense level. A split that needs `N2 = 0` is not a nested array and is
/// rejected.
pub fn nested_mask(n: usize, p: usize) -> Result<SelectionMask> {
    check_budget(n, p)?;
    let mut n1 = p.div_ceil(2);
    loop {
        let n2 = p - n1;
        if n2 == 0 {
            return Err(Error::Construction(format!("no two-level split of {p} sensors fits {n} positions")));
        }
        if (n1 + 1) * n2 - 1 < n {
            let mut idx: Vec<usize> = (0..n1).collect();
            idx.extend((1..=n2).map(|k| (n1 + 1) * k - 1));
            return SelectionMask::from_indices(n, &idx);
        }
        n1 += 1;
    }
}

/// A uniform `p`-subset drawn from a seeded generator.
pub fn random_mask(n: usize, p: usize, seed: u64) -> Result<SelectionMask> {
    check_budget(n, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, p).into_vec();
    idx.sort_unstable();
    SelectionMask::from_indices(n, &idx)
}

fn check_budget(n: usize, p: usize) -> Result<()> {
    if p == 0 || p > n {
        return Err(Error::validation("budget_p", format!("must lie in [1, {n}], got {p}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrayGrid, Direction, Scenario};
    use crate::sdr::assemble;

    fn problem(n: usize, targets: &[f64], undesired: &[f64], p: usize) -> DesignProblem {
        let d = |deg: &f64| Direction::new(*deg, 1.0).unwrap();
        let s = Scenario::new(
            ArrayGrid::half_wavelength(n).unwrap(),
            targets.iter().map(d).collect(),
            undesired.iter().map(d).collect(),
            vec![1.0; targets.len()],
            p,
            1.0,
        )
        .unwrap();
        assemble(&s).unwrap()
    }

    #[test]
    fn identity_quadratic_gives_matched_filter() {
        let dp = problem(6, &[63.0], &[], 6);
        let r = fixed_support_optimum(&dp, &SelectionMask::full(6)).unwrap();
        assert!((r.value - 1.0 / 6.0).abs() < 1e-14);
        for (ri, ai) in r.per_target_vectors[0].iter().zip(&dp.target_vectors[0]) {
            assert!((ri - ai / 6.0).norm() < 1e-14);
        }
    }

    #[test]
    fn single_sensor_value_is_diagonal_entry() {
        let dp = problem(5, &[40.0, 80.0], &[120.0], 1);
        let mask = SelectionMask::from_indices(5, &[3]).unwrap();
        let r = fixed_support_optimum(&dp, &mask).unwrap();
        for l in 0..2 {
            // R = 1/|a_k|² = 1, so the value is Q_kk itself.
            assert!((r.per_target_values[l] - dp.qmat[l].get(3, 3).re).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_is_stationary() {
        let dp = problem(7, &[50.0, 100.0], &[30.0, 140.0], 4);
        let mask = SelectionMask::from_indices(7, &[0, 2, 3, 6]).unwrap();
        let r = fixed_support_optimum(&dp, &mask).unwrap();
        let idx = mask.indices();
        for l in 0..2 {
            let (q, a) = restricted(&dp, &idx, l);
            let rv = DVector::from_column_slice(&r.per_target_vectors[l]);
            let lhs = &q * &rv;
            let scale = a.dotc(&rv) * r.per_target_values[l];
            let rhs = &a * scale;
            assert!((lhs - rhs).iter().all(|z| z.norm() < 1e-10));
            // Constraint active: aᴴ r = 1.
            assert!((a.dotc(&rv) - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn closed_form_beats_feasible_rank_one_points() {
        let dp = problem(6, &[70.0], &[20.0, 110.0], 3);
        let mask = SelectionMask::from_indices(6, &[0, 1, 4]).unwrap();
        let best = fixed_support_optimum(&dp, &mask).unwrap().value;
        let a = crate::model::restrict(&dp.target_vectors[0], &mask).unwrap();
        let q = dp.qmat[0].restrict(&mask).unwrap();
        // a aᴴ scaled to satisfy Tr(R a aᴴ) = 1.
        let cand = outer(&a).scaled(1.0 / 9.0);
        assert!(q.inner(&cand) >= best - 1e-12);
    }

    #[test]
    fn subsets_in_lexicographic_order() {
        assert_eq!(binomial(18, 10), 43758);
        assert_eq!(binomial(4, 5), 0);
        let mut c = unrank(5, 3, 0);
        let mut all = vec![c.clone()];
        while next_subset(&mut c, 5) {
            all.push(c.clone());
        }
        assert_eq!(all.len(), 10);
        for (r, sub) in all.iter().enumerate() {
            assert_eq!(&unrank(5, 3, r as u128), sub);
        }
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn full_budget_enumeration_is_single_row() {
        let dp = problem(4, &[60.0], &[10.0], 4);
        let e = enumerate_best(&dp, 4, 10).unwrap();
        assert_eq!(e.table.len(), 1);
        let full = fixed_support_optimum(&dp, &SelectionMask::full(4)).unwrap();
        assert!((e.best.value - full.value).abs() < 1e-15);
    }

    #[test]
    fn symmetric_ties_pick_first_mask() {
        let dp = problem(4, &[90.0], &[], 2);
        let e = enumerate_best(&dp, 2, 100).unwrap();
        assert_eq!(e.table.len(), 6);
        for row in &e.table {
            assert!((row.value - 0.5).abs() < 1e-12);
        }
        assert_eq!(e.best.mask.indices(), vec![0, 1]);
        assert_eq!(e.worst.mask.indices(), vec![0, 1]);
    }

    #[test]
    fn cap_is_enforced() {
        let dp = problem(18, &[40.0], &[], 10);
        assert!(matches!(enumerate_best(&dp, 10, 100), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn enumeration_csv_layout() {
        let dp = problem(4, &[50.0], &[120.0], 2);
        let e = enumerate_best(&dp, 2, 100).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "mask_bits,value,value_db_rel_best");
        assert_eq!(lines.len(), 7);
        assert!(lines[1].ends_with(",0"));
    }

    #[test]
    fn baseline_layouts() {
        assert_eq!(ula_mask(18, 10).unwrap().indices(), (0..10).collect::<Vec<_>>());
        assert_eq!(nested_mask(12, 6).unwrap().indices(), vec![0, 1, 2, 3, 7, 11]);
        assert_eq!(nested_mask(18, 10).unwrap().indices(), vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 17]);
        assert!(matches!(nested_mask(5, 1), Err(Error::Construction(_))));
        let a = random_mask(18, 10, 7).unwrap();
        assert_eq!(a, random_mask(18, 10, 7).unwrap());
        assert_eq!(a.count(), 10);
    }

    #[test]
    fn oracle_design_is_consistent() {
        let dp = problem(8, &[40.0, 65.0], &[25.0, 110.0], 5);
        let mask = SelectionMask::from_indices(8, &[0, 2, 3, 6, 7]).unwrap();
        let d = oracle_design(&dp, &mask).unwrap();
        let opt = fixed_support_optimum(&dp, &mask).unwrap();
        assert!((dp.objective(&d.constituents) - opt.value).abs() < 1e-12 * opt.value);
        assert!((d.alpha * d.composite.trace() - 1.0).abs() < 1e-12);
        for (r, a) in d.constituents.iter().zip(&dp.amat) {
            assert!((r.inner(a) - 1.0).abs() < 1e-10);
        }
        for k in [1, 4, 5] {
            assert_eq!(d.composite.get(k, k).norm(), 0.0);
        }
    }

    #[test]
    fn enumeration_dominates_structured_layouts() {
        let dp = problem(10, &[45.0, 70.0], &[30.0, 120.0], 5);
        let e = enumerate_best(&dp, 5, 1_000).unwrap();
        assert_eq!(e.table.len(), 252);
        for mask in [ula_mask(10, 5).unwrap(), nested_mask(10, 5).unwrap(), random_mask(10, 5, 3).unwrap()] {
            let v = fixed_support_optimum(&dp, &mask).unwrap().value;
            assert!(e.best.value <= v && v <= e.worst.value);
        }
    }
}
