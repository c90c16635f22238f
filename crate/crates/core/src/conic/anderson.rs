//! Type-II Anderson acceleration of a fixed-point map `z ↦ g(z)`.

use nalgebra::{DMatrix, DVector};

/// Tikhonov weight on the least-squares system, relative to its trace.
const REGULARIZATION: f64 = 1e-10;

pub(crate) struct Anderson {
    mem: usize,
    df: Vec<Vec<f64>>,
    dg: Vec<Vec<f64>>,
    gram: Vec<f64>,
    len: usize,
    next: usize,
    f_prev: Vec<f64>,
    g_prev: Vec<f64>,
    primed: bool,
    f: Vec<f64>,
}

impl Anderson {
    pub(crate) fn new(dim: usize, mem: usize) -> Self {
        Anderson {
            mem,
            df: vec![vec![0.0; dim]; mem],
            dg: vec![vec![0.0; dim]; mem],
            gram: vec![0.0; mem * mem],
            len: 0,
            next: 0,
            f_prev: vec![0.0; dim],
            g_prev: vec![0.0; dim],
            primed: false,
            f: vec![0.0; dim],
        }
    }

    pub(crate) fn reset(&mut self) {
        self.len = 0;
        self.next = 0;
        self.primed = false;
    }

    /// Records the pair `(z, g(z))` and writes the extrapolated point into
    /// `out`. Returns `false` when there is not enough history yet or the
    /// least-squares system is unusable.
    pub(crate) fn step(&mut self, z: &[f64], g: &[f64], out: &mut [f64]) -> bool {
        for ((f, g), z) in self.f.iter_mut().zip(g).zip(z) {
            *f = g - z;
        }
        if self.primed {
            let t = self.next;
            for k in 0..self.f.len() {
                self.df[t][k] = self.f[k] - self.f_prev[k];
                self.dg[t][k] = g[k] - self.g_prev[k];
            }
            self.next = (t + 1) % self.mem;
            self.len = (self.len + 1).min(self.mem);
            for i in 0..self.len {
                let d: f64 = self.df[t].iter().zip(&self.df[i]).map(|(a, b)| a * b).sum();
                self.gram[t * self.mem + i] = d;
                self.gram[i * self.mem + t] = d;
            }
        }
        self.f_prev.copy_from_slice(&self.f);
        self.g_prev.copy_from_slice(g);
        self.primed = true;
        if self.len == 0 {
            return false;
        }

        let k = self.len;
        let mut m = DMatrix::from_fn(k, k, |i, j| self.gram[i * self.mem + j]);
        let tr: f64 = (0..k).map(|i| m[(i, i)]).sum();
        if !(tr > 0.0 && tr.is_finite()) {
            return false;
        }
        for i in 0..k {
            m[(i, i)] += REGULARIZATION * tr;
        }
        let rhs = DVector::from_fn(k, |i, _| self.df[i].iter().zip(&self.f).map(|(a, b)| a * b).sum());
        let Some(chol) = m.cholesky() else {
            return false;
        };
        let gamma = chol.solve(&rhs);
        if !gamma.iter().all(|v| v.is_finite()) {
            return false;
        }
        out.copy_from_slice(g);
        for (i, gi) in gamma.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(&self.dg[i]) {
                *o -= gi * d;
            }
        }
        true
    }
}
