//! Dense complex Hermitian matrices, the real symmetric embedding
//! `[[Re, −Im], [Im, Re]]`, PSD projection and eigen-extraction.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SelectionMask;

const HERMITIAN_TOL: f64 = 1e-12;
/// Allowed deviation from block structure in [`extract_hermitian`].
pub const STRUCTURE_TOL: f64 = 1e-6;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_SWEEPS: usize = 10_000;

/// Dense `n×n` complex Hermitian matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitianMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        HermitianMatrix {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Checks Hermitian symmetry (relative to the largest entry), then
    /// stores the exactly symmetrized matrix.
    pub fn new(n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!("{} entries for a {n}x{n} matrix", data.len())));
        }
        let scale = data.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((data[i * n + j] - data[j * n + i].conj()).norm());
            }
        }
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::Numeric(format!("matrix is not Hermitian (deviation {dev:.3e})")));
        }
        Ok(Self::symmetrized(n, data))
    }

    fn symmetrized(n: usize, mut data: Vec<Complex64>) -> Self {
        for i in 0..n {
            data[i * n + i].im = 0.0;
            for j in i + 1..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i].conj());
                data[i * n + j] = avg;
                data[j * n + i] = avg.conj();
            }
        }
        HermitianMatrix { n, data }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Result<Self> {
        let data = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self::new(n, data)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Re Tr(self · other)`, the real Frobenius inner product for Hermitian
    /// arguments.
    pub fn inner(&self, other: &HermitianMatrix) -> f64 {
        assert_eq!(self.n, other.n, "dimension mismatch in inner product");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(a, x)| a * x)
                    .sum()
            })
            .collect()
    }

    /// `uᴴ·self·v`.
    pub fn bilinear(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        let hv = self.matvec(v);
        u.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum()
    }

    /// `vᴴ·self·v`, real up to rounding; the imaginary residue is dropped.
    pub fn quad_form(&self, v: &[Complex64]) -> f64 {
        self.bilinear(v, v).re
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        HermitianMatrix {
            n: self.n,
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        assert_eq!(self.n, other.n);
        HermitianMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn add_identity(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            out.data[i * self.n + i].re += shift;
        }
        out
    }

    /// Principal submatrix on the active positions of `mask`.
    pub fn restrict(&self, mask: &SelectionMask) -> Result<Self> {
        if mask.len() != self.n {
            return Err(Error::Dimension(format!("mask of {} vs matrix of {}", mask.len(), self.n)));
        }
        let idx = mask.indices();
        let m = idx.len();
        let mut data = Vec::with_capacity(m * m);
        for &i in &idx {
            for &j in &idx {
                data.push(self.get(i, j));
            }
        }
        Ok(HermitianMatrix { n: m, data })
    }

    /// Inverse of [`restrict`](Self::restrict): places `self` on the active
    /// rows and columns of an `mask.len()`-square zero matrix.
    pub fn expand(&self, mask: &SelectionMask) -> Result<Self> {
        let idx = mask.indices();
        if idx.len() != self.n {
            return Err(Error::Dimension(format!(
                "mask with {} active positions vs matrix of {}",
                idx.len(),
                self.n
            )));
        }
        let big = mask.len();
        let mut out = Self::zeros(big);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[i * big + j] = self.get(a, b);
            }
        }
        Ok(out)
    }

    /// Frobenius norm of row `k`.
    pub fn row_norm(&self, k: usize) -> f64 {
        self.data[k * self.n..(k + 1) * self.n]
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

/// Dense real symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSymmetric {
    m: usize,
    data: Vec<f64>,
}

impl RealSymmetric {
    pub fn new(m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::Dimension(format!("{} entries for a {m}x{m} matrix", data.len())));
        }
        let scale = data.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        for i in 0..m {
            for j in i + 1..m {
                if (data[i * m + j] - data[j * m + i]).abs() > HERMITIAN_TOL * scale {
                    return Err(Error::Numeric(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(RealSymmetric { m, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(m, data)
    }

    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = 1.0;
        }
        RealSymmetric { m, data }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.m).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub(crate) fn from_raw(m: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), m * m);
        RealSymmetric { m, data }
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `k` (row-major `m×m` storage) is the eigenvector of `values[k]`.
    vectors: Vec<f64>,
    m: usize,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.vectors[i * self.m + k]).collect()
    }

    /// Rebuilds `V·diag(f(λ))·Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> RealSymmetric {
        let m = self.m;
        let mut out = vec![0.0; m * m];
        for k in 0..m {
            let w = f(self.values[k]);
            if w == 0.0 {
                continue;
            }
            for i in 0..m {
                let vik = w * self.vectors[i * m + k];
                if vik == 0.0 {
                    continue;
                }
                for j in i..m {
                    out[i * m + j] += vik * self.vectors[j * m + k];
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                out[i * m + j] = out[j * m + i];
            }
        }
        RealSymmetric::from_raw(m, out)
    }
}

/// Complex analogue of [`SymEigen`] for Hermitian input.
#[derive(Debug, Clone)]
pub struct HermEigen {
    pub values: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

impl HermEigen {
    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        self.vectors.column(k).iter().copied().collect()
    }
}

/// `v vᴴ`.
pub fn outer(v: &[Complex64]) -> HermitianMatrix {
    let n = v.len();
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            data.push(v[i] * v[j].conj());
        }
    }
    HermitianMatrix::symmetrized(n, data)
}

/// Real `2n×2n` embedding `[[Re H, −Im H], [Im H, Re H]]`.
pub fn embed_real(h: &HermitianMatrix) -> RealSymmetric {
    let n = h.dim();
    let m = 2 * n;
    let mut data = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = h.get(i, j);
            data[i * m + j] = z.re;
            data[(i + n) * m + (j + n)] = z.re;
            data[i * m + (j + n)] = -z.im;
            data[(i + n) * m + j] = z.im;
        }
    }
    RealSymmetric::from_raw(m, data)
}

/// Left inverse of [`embed_real`], averaging the redundant blocks.
pub fn extract_hermitian(s: &RealSymmetric) -> Result<HermitianMatrix> {
    let m = s.dim();
    if m % 2 != 0 {
        return Err(Error::Dimension(format!("embedding must have even dimension, got {m}")));
    }
    let n = m / 2;
    let mut dev = 0.0f64;
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let s11 = s.get(i, j);
            let s22 = s.get(i + n, j + n);
            let s12 = s.get(i, j + n);
            let s21 = s.get(i + n, j);
            dev = dev.max((s11 - s22).abs()).max((s12 + s21).abs());
            data.push(Complex64::new(0.5 * (s11 + s22), 0.5 * (s21 - s12)));
        }
    }
    if dev > STRUCTURE_TOL {
        return Err(Error::Structure { deviation: dev });
    }
    Ok(HermitianMatrix::symmetrized(n, data))
}

/// Symmetric eigendecomposition, eigenvalues sorted descending.
pub fn eig_sym(s: &RealSymmetric) -> Result<SymEigen> {
    let m = s.dim();
    let mat = DMatrix::from_row_slice(m, m, s.entries());
    let eig = SymmetricEigen::try_new(mat, EIG_EPS, EIG_MAX_SWEEPS)
        .ok_or_else(|| Error::Numeric(format!("symmetric eigensolver did not converge ({m}x{m})")))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = vec![0.0; m * m];
    for (col, &k) in order.iter().enumerate() {
        for i in 0..m {
            vectors[i * m + col] = eig.eigenvectors[(i, k)];
        }
    }
    Ok(SymEigen { values, vectors, m })
}

/// Hermitian eigendecomposition, eigenvalues sorted descending.
pub fn eig_herm(h: &HermitianMatrix) -> Result<HermEigen> {
    let n = h.dim();
    let eig = SymmetricEigen::try_new(h.to_nalgebra(), EIG_EPS, EIG_MAX_SWEEPS)
        .ok_or_else(|| Error::Numeric(format!("Hermitian eigensolver did not converge ({n}x{n})")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    Ok(HermEigen { values, vectors })
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clipped to zero.
pub fn project_psd(s: &RealSymmetric) -> Result<RealSymmetric> {
    let eig = eig_sym(s)?;
    if eig.values.last().is_some_and(|&v| v >= 0.0) {
        return Ok(s.clone());
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0)))
}

/// Largest eigenvalue and a unit eigenvector whose largest-modulus entry is
/// real and nonnegative.
pub fn principal_eigpair(h: &HermitianMatrix) -> Result<(f64, Vec<Complex64>)> {
    let eig = eig_herm(h)?;
    let mut v = eig.vector(0);
    normalize_phase(&mut v);
    Ok((eig.values[0], v))
}

fn normalize_phase(v: &mut [Complex64]) {
    let Some(pivot) = v
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()).then(b.0.cmp(&a.0)))
        .map(|(_, z)| z)
    else {
        return;
    };
    if pivot.norm() == 0.0 {
        return;
    }
    let rot = pivot.conj() / pivot.norm();
    for z in v.iter_mut() {
        *z *= rot;
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &HermitianMatrix) -> Result<f64> {
    Ok(*eig_herm(h)?.values.last().expect("nonempty matrix"))
}
