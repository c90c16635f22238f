//! Sparse `LDLᵀ` factorization of the quasi-definite ADMM system
//!
//! ```text
//! K = [ σI   Aᵀ      ]
//!     [ A   −diag(1/ρ) ]
//! ```
//!
//! Quasi-definite matrices factor stably under any symmetric permutation.
//! The ordering eliminates rows touching at most one variable first, then
//! the variables, then the remaining rows, which produces no fill when the
//! coupling rows share no variables.

use super::SparseMatrix;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

pub(crate) struct KktFactor {
    nx: usize,
    dim: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    // Upper triangle of the permuted K, compressed by column.
    kp: Vec<usize>,
    ki: Vec<usize>,
    kx: Vec<f64>,
    /// Position in `kx` of each row's `−1/ρ` diagonal.
    row_diag: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    dinv: Vec<f64>,
    work: Vec<f64>,
}

impl KktFactor {
    pub(crate) fn new(a: &SparseMatrix, sigma: f64, rho: &[f64]) -> Result<Self> {
        let nx = a.cols();
        let m = a.rows();
        let dim = nx + m;

        let mut single = Vec::new();
        let mut multi = Vec::new();
        for r in 0..m {
            if a.row(r).count() <= 1 {
                single.push(nx + r);
            } else {
                multi.push(nx + r);
            }
        }
        let perm: Vec<usize> = single.into_iter().chain(0..nx).chain(multi).collect();
        let mut iperm = vec![0; dim];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // (row, col, value) in permuted coordinates, upper triangle.
        let mut entries: Vec<(usize, usize, f64, Option<usize>)> = Vec::with_capacity(dim + a.nnz());
        for j in 0..nx {
            let p = iperm[j];
            entries.push((p, p, sigma, None));
        }
        for r in 0..m {
            let pr = iperm[nx + r];
            entries.push((pr, pr, -1.0 / rho[r], Some(r)));
            for (c, v) in a.row(r) {
                let pc = iperm[c];
                entries.push((pr.min(pc), pr.max(pc), v, None));
            }
        }
        entries.sort_by_key(|&(i, j, _, _)| (j, i));
        let mut kp = vec![0; dim + 1];
        let mut ki = Vec::with_capacity(entries.len());
        let mut kx = Vec::with_capacity(entries.len());
        let mut row_diag = vec![0; m];
        for (i, j, v, diag_of) in entries {
            kp[j + 1] += 1;
            if let Some(r) = diag_of {
                row_diag[r] = ki.len();
            }
            ki.push(i);
            kx.push(v);
        }
        for j in 0..dim {
            kp[j + 1] += kp[j];
        }

        // Elimination tree and column counts of L.
        let mut etree = vec![NONE; dim];
        let mut lnz = vec![0usize; dim];
        let mut mark = vec![NONE; dim];
        for j in 0..dim {
            mark[j] = j;
            for &i0 in &ki[kp[j]..kp[j + 1]] {
                let mut i = i0;
                while mark[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    mark[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; dim + 1];
        for i in 0..dim {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[dim];

        let mut f = KktFactor {
            nx,
            dim,
            perm,
            kp,
            ki,
            kx,
            row_diag,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            dinv: vec![0.0; dim],
            work: vec![0.0; dim],
        };
        f.factor()?;
        Ok(f)
    }

    /// Replaces the penalty vector and refactors numerically.
    pub(crate) fn update_rho(&mut self, rho: &[f64]) -> Result<()> {
        for (r, &pos) in self.row_diag.iter().enumerate() {
            self.kx[pos] = -1.0 / rho[r];
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.dim;
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut used = vec![false; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        let mut y_idx: Vec<usize> = Vec::with_capacity(n);
        let mut elim: Vec<usize> = Vec::with_capacity(n);

        for k in 0..n {
            y_idx.clear();
            for p in self.kp[k]..self.kp[k + 1] {
                let b = self.ki[p];
                if b == k {
                    d[k] = self.kx[p];
                    continue;
                }
                y[b] = self.kx[p];
                if used[b] {
                    continue;
                }
                used[b] = true;
                elim.clear();
                elim.push(b);
                let mut next = self.etree[b];
                while next != NONE && next < k && !used[next] {
                    used[next] = true;
                    elim.push(next);
                    next = self.etree[next];
                }
                y_idx.extend(elim.iter().rev());
            }
            for &c in y_idx.iter().rev() {
                let yc = y[c];
                let end = next_space[c];
                for j in self.lp[c]..end {
                    y[self.li[j]] -= self.lx[j] * yc;
                }
                let l = yc * self.dinv[c];
                self.li[end] = k;
                self.lx[end] = l;
                d[k] -= yc * l;
                next_space[c] += 1;
                y[c] = 0.0;
                used[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(Error::Numeric("KKT factorization hit a zero pivot".into()));
            }
            self.dinv[k] = 1.0 / d[k];
        }
        Ok(())
    }

    /// Solves `K [x; ν] = [r1; r2]` and writes `x` into `out`.
    pub(crate) fn solve(&mut self, r1: &[f64], r2: &[f64], out: &mut [f64]) {
        let w = &mut self.work;
        for (new, &old) in self.perm.iter().enumerate() {
            w[new] = if old < self.nx { r1[old] } else { r2[old - self.nx] };
        }
        for i in 0..self.dim {
            let wi = w[i];
            for j in self.lp[i]..self.lp[i + 1] {
                w[self.li[j]] -= self.lx[j] * wi;
            }
        }
        for (wi, di) in w.iter_mut().zip(&self.dinv) {
            *wi *= di;
        }
        for i in (0..self.dim).rev() {
            let mut acc = w[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * w[self.li[j]];
            }
            w[i] = acc;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            if old < self.nx {
                out[old] = w[new];
            }
        }
    }
}
