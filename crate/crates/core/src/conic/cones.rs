//! Cone blocks and their Euclidean projections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{project_psd, RealSymmetric};

/// One block of the slack cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeBlock {
    /// `{0}^d`; its dual is the free cone.
    Zero(usize),
    NonNeg(usize),
    /// `{(t, x) : ‖x‖₂ ≤ t}` of total dimension `d`.
    SecondOrder(usize),
    /// PSD matrices of the given order, stored as the √2-scaled lower
    /// triangle, column by column.
    PsdTriangle(usize),
}

impl ConeBlock {
    /// Number of slack entries the block occupies.
    pub fn dim(&self) -> usize {
        match *self {
            ConeBlock::Zero(d) | ConeBlock::NonNeg(d) | ConeBlock::SecondOrder(d) => d,
            ConeBlock::PsdTriangle(k) => k * (k + 1) / 2,
        }
    }

    fn raw(&self) -> usize {
        match *self {
            ConeBlock::Zero(d)
            | ConeBlock::NonNeg(d)
            | ConeBlock::SecondOrder(d)
            | ConeBlock::PsdTriangle(d) => d,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            ConeBlock::Zero(_) => "zero",
            ConeBlock::NonNeg(_) => "nonneg",
            ConeBlock::SecondOrder(_) => "soc",
            ConeBlock::PsdTriangle(_) => "psd",
        }
    }
}

/// Ordered list of cone blocks covering the slack vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub blocks: Vec<ConeBlock>,
}

impl ConeSpec {
    pub fn new(blocks: Vec<ConeBlock>) -> Result<Self> {
        let spec = ConeSpec { blocks };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.blocks.iter().enumerate() {
            if b.raw() == 0 {
                return Err(Error::Dimension(format!("cone block {i} ({}) has zero dimension", b.label())));
            }
        }
        Ok(())
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(ConeBlock::dim).sum()
    }

    /// `(offset, block)` pairs.
    pub fn spans(&self) -> impl Iterator<Item = (usize, ConeBlock)> + '_ {
        self.blocks.iter().scan(0usize, |off, &b| {
            let start = *off;
            *off += b.dim();
            Some((start, b))
        })
    }

    pub(crate) fn describe(&self) -> Vec<String> {
        self.blocks.iter().map(|b| format!("{} {}", b.label(), b.raw())).collect()
    }
}

/// Position of `(i, j)`, `i ≥ j`, in the column-wise lower triangle of an
/// order-`k` matrix.
pub fn tri_index(i: usize, j: usize, k: usize) -> usize {
    debug_assert!(i >= j && i < k);
    j * k - j * j.saturating_sub(1) / 2 + (i - j)
}

/// √2-scaled lower-triangle vectorization.
pub fn svec(s: &RealSymmetric) -> Vec<f64> {
    let k = s.dim();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for j in 0..k {
        for i in j..k {
            let v = s.get(i, j);
            out.push(if i == j { v } else { v * std::f64::consts::SQRT_2 });
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], k: usize) -> RealSymmetric {
    assert_eq!(v.len(), k * (k + 1) / 2, "triangle length mismatch");
    let mut data = vec![0.0; k * k];
    let mut p = 0;
    for j in 0..k {
        for i in j..k {
            let x = if i == j { v[p] } else { v[p] * std::f64::consts::FRAC_1_SQRT_2 };
            data[i * k + j] = x;
            data[j * k + i] = x;
            p += 1;
        }
    }
    RealSymmetric::from_raw(k, data)
}

/// Euclidean projection of `s` onto the cone described by `cones`.
pub fn project_cone(s: &[f64], cones: &ConeSpec) -> Vec<f64> {
    let mut out = s.to_vec();
    project_cone_in_place(&mut out, cones).expect("eigensolver failure in PSD projection");
    out
}

pub(crate) fn project_cone_in_place(s: &mut [f64], cones: &ConeSpec) -> Result<()> {
    assert_eq!(s.len(), cones.total_dim(), "slack length does not match cone spec");
    for (off, block) in cones.spans() {
        let seg = &mut s[off..off + block.dim()];
        match block {
            ConeBlock::Zero(_) => seg.fill(0.0),
            ConeBlock::NonNeg(_) => seg.iter_mut().for_each(|x| *x = x.max(0.0)),
            ConeBlock::SecondOrder(_) => project_soc(seg),
            ConeBlock::PsdTriangle(k) => {
                let p = project_psd(&smat(seg, k))?;
                seg.copy_from_slice(&svec(&p));
            }
        }
    }
    Ok(())
}

fn project_soc(seg: &mut [f64]) {
    let t = seg[0];
    let nx = seg[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if nx <= t {
        return;
    }
    if nx <= -t {
        seg.fill(0.0);
        return;
    }
    let a = 0.5 * (t + nx);
    seg[0] = a;
    let f = a / nx;
    seg[1..].iter_mut().for_each(|x| *x *= f);
}

/// Euclidean projection onto the dual cone: the free cone for `Zero`
/// blocks, the block itself otherwise (all remaining cones are self-dual).
pub fn project_dual_cone(y: &[f64], cones: &ConeSpec) -> Vec<f64> {
    let mut out = y.to_vec();
    for (off, block) in cones.spans() {
        if matches!(block, ConeBlock::Zero(_)) {
            continue;
        }
        let seg = &mut out[off..off + block.dim()];
        let single = ConeSpec { blocks: vec![block] };
        let p = project_cone(seg, &single);
        seg.copy_from_slice(&p);
    }
    out
}

/// `‖v − Π_K(v)‖∞`.
pub fn cone_distance(v: &[f64], cones: &ConeSpec) -> f64 {
    let p = project_cone(v, cones);
    v.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(blocks: Vec<ConeBlock>) -> ConeSpec {
        ConeSpec::new(blocks).unwrap()
    }

    #[test]
    fn nonneg_clip() {
        let p = project_cone(&[-1.0, 2.0], &spec(vec![ConeBlock::NonNeg(2)]));
        assert_eq!(p, vec![0.0, 2.0]);
    }

    #[test]
    fn soc_boundary_case() {
        // (t, x) = (0, 2): ‖x‖ = 2 > |t|, so the projection is
        // ((t + ‖x‖)/2)·(1, x/‖x‖) = (1, 1).
        let p = project_cone(&[0.0, 2.0], &spec(vec![ConeBlock::SecondOrder(2)]));
        assert!((p[0] - 1.0).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
        // Residual is perpendicular to the projection.
        let r = [0.0 - p[0], 2.0 - p[1]];
        assert!((r[0] * p[0] + r[1] * p[1]).abs() < 1e-15);
    }

    #[test]
    fn soc_inside_and_polar() {
        let s = spec(vec![ConeBlock::SecondOrder(3)]);
        assert_eq!(project_cone(&[5.0, 3.0, 4.0], &s), vec![5.0, 3.0, 4.0]);
        assert_eq!(project_cone(&[-5.0, 3.0, 4.0], &s), vec![0.0; 3]);
    }

    #[test]
    fn psd_block_clip() {
        let s = spec(vec![ConeBlock::PsdTriangle(2)]);
        // diag(1, -2) in svec form: (0,0), (1,0)·√2, (1,1).
        let p = project_cone(&[1.0, 0.0, -2.0], &s);
        assert!((p[0] - 1.0).abs() < 1e-14 && p[1].abs() < 1e-14 && p[2].abs() < 1e-14);
    }

    #[test]
    fn zero_block_and_dims() {
        let s = spec(vec![ConeBlock::Zero(2), ConeBlock::PsdTriangle(3)]);
        assert_eq!(s.total_dim(), 8);
        let p = project_cone(&[3.0, -1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0], &s);
        assert_eq!(&p[..2], &[0.0, 0.0]);
        assert!(ConeSpec::new(vec![ConeBlock::NonNeg(0)]).is_err());
    }

    #[test]
    fn svec_inner_product_matches_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = 4;
        let mk = |rng: &mut ChaCha8Rng| {
            let raw: Vec<f64> = (0..k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d = (0..k * k).map(|p| raw[p] + raw[(p % k) * k + p / k]).collect();
            RealSymmetric::new(k, d).unwrap()
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        let frob: f64 = a.entries().iter().zip(b.entries()).map(|(x, y)| x * y).sum();
        let vec: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert!((frob - vec).abs() < 1e-12);
        let back = smat(&svec(&a), k);
        for (x, y) in back.entries().iter().zip(a.entries()) {
            assert!((x - y).abs() < 1e-14);
        }
        for j in 0..k {
            for i in j..k {
                let mut e = vec![0.0; k * k];
                e[i * k + j] = 1.0;
                e[j * k + i] = 1.0;
                let v = svec(&RealSymmetric::new(k, e).unwrap());
                let hot = v.iter().position(|&x| x != 0.0).unwrap();
                assert_eq!(hot, tri_index(i, j, k));
            }
        }
    }

    fn random_spec(rng: &mut ChaCha8Rng) -> ConeSpec {
        let nb = rng.gen_range(1..4);
        let blocks = (0..nb)
            .map(|_| match rng.gen_range(0..4) {
                0 => ConeBlock::Zero(rng.gen_range(1..4)),
                1 => ConeBlock::NonNeg(rng.gen_range(1..5)),
                2 => ConeBlock::SecondOrder(rng.gen_range(1..5)),
                _ => ConeBlock::PsdTriangle(rng.gen_range(1..5)),
            })
            .collect();
        spec(blocks)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn projection_idempotent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_spec(&mut rng);
            let v = random_vec(&mut rng, s.total_dim(), 3.0);
            let p = project_cone(&v, &s);
            let pp = project_cone(&p, &s);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn projection_variational_inequality(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_spec(&mut rng);
            let v = random_vec(&mut rng, s.total_dim(), 3.0);
            let p = project_cone(&v, &s);
            for _ in 0..5 {
                let k = project_cone(&random_vec(&mut rng, s.total_dim(), 3.0), &s);
                let ip: f64 = v.iter().zip(&p).zip(&k).map(|((v, p), k)| (v - p) * (k - p)).sum();
                prop_assert!(ip <= 1e-8);
            }
        }
    }
}
