//! Sparse-times-dense products used by the master-equation right-hand sides.

use crate::{CMatrix, C64};

/// `out += c * x`, entrywise.
pub(crate) fn axpy(out: &mut CMatrix, c: C64, x: &CMatrix) {
    for (o, v) in out.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *o += c * v;
    }
}

/// Compressed-row square matrix.
#[derive(Clone, Debug)]
pub(crate) struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    /// Keeps every entry that is not exactly zero.
    pub(crate) fn from_dense(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..n {
            for c in 0..n {
                let v = m[(r, c)];
                if v.re != 0.0 || v.im != 0.0 {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    /// `out += c * A x`.
    pub(crate) fn left_acc(&self, x: &CMatrix, c: C64, out: &mut CMatrix) {
        let n = self.n;
        for col in 0..x.ncols() {
            let xc = x.column(col);
            let mut oc = out.column_mut(col);
            for r in 0..n {
                let mut acc = C64::default();
                for (k, v) in self.row(r) {
                    acc += v * xc[k];
                }
                oc[r] += c * acc;
            }
        }
    }

    /// `out += c * A^dag x`.
    pub(crate) fn adj_left_acc(&self, x: &CMatrix, c: C64, out: &mut CMatrix) {
        for col in 0..x.ncols() {
            let xc = x.column(col);
            let mut oc = out.column_mut(col);
            for k in 0..self.n {
                let xk = c * xc[k];
                if xk == C64::default() {
                    continue;
                }
                for (i, v) in self.row(k) {
                    oc[i] += v.conj() * xk;
                }
            }
        }
    }

    /// `out += c * x A`.
    pub(crate) fn right_acc(&self, x: &CMatrix, c: C64, out: &mut CMatrix) {
        for k in 0..self.n {
            for (j, v) in self.row(k) {
                let f = c * v;
                let xk = x.column(k);
                out.column_mut(j).axpy(f, &xk, C64::new(1.0, 0.0));
            }
        }
    }

    /// `out += c * x A^dag`.
    pub(crate) fn right_adj_acc(&self, x: &CMatrix, c: C64, out: &mut CMatrix) {
        for j in 0..self.n {
            for (k, v) in self.row(j) {
                let f = c * v.conj();
                let xk = x.column(k);
                out.column_mut(j).axpy(f, &xk, C64::new(1.0, 0.0));
            }
        }
    }

    pub(crate) fn left(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.n, x.ncols());
        self.left_acc(x, C64::new(1.0, 0.0), &mut out);
        out
    }
}
