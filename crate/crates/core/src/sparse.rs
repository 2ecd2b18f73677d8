//! Compressed-row complex matrices used to apply structured operators to
//! dense density matrices without paying for dense products.
//!
//! Dense matrices handed to the kernels here are column-major slices of a
//! `dim × dim` matrix, the layout nalgebra uses.

use alloc::vec;
use alloc::vec::Vec;

use crate::operator::{CMatrix, C64};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Csr {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    /// Keeps every entry that is not exactly zero.
    pub(crate) fn from_dense(m: &CMatrix) -> Self {
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr { dim, row_ptr, cols, vals }
    }

    pub(crate) fn from_triplets(dim: usize, mut entries: Vec<(usize, usize, C64)>) -> Self {
        entries.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(entries.len());
        let mut vals: Vec<C64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            cols.push(j);
            vals.push(v);
            row_ptr[i + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut out = Csr { dim, row_ptr, cols, vals };
        out.prune();
        out
    }

    fn prune(&mut self) {
        let mut row_ptr = Vec::with_capacity(self.dim + 1);
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        row_ptr.push(0);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let v = self.vals[k];
                if v.re != 0.0 || v.im != 0.0 {
                    cols.push(self.cols[k]);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    #[cfg(test)]
    pub(crate) fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim)
            .flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k])))
    }

    pub(crate) fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.entries() {
            m[(i, j)] += v;
        }
        m
    }

    pub(crate) fn adjoint(&self) -> Self {
        let t = self.entries().map(|(i, j, v)| (j, i, v.conj())).collect();
        Csr::from_triplets(self.dim, t)
    }

    pub(crate) fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= s;
        }
        out.prune();
        out
    }

    pub(crate) fn add(&self, other: &Csr) -> Self {
        let t = self.entries().chain(other.entries()).collect();
        Csr::from_triplets(self.dim, t)
    }

    /// Sparse product `self · other`.
    pub(crate) fn matmul(&self, other: &Csr) -> Self {
        let mut acc = vec![C64::new(0.0, 0.0); self.dim];
        let mut touched = vec![false; self.dim];
        let mut hits: Vec<usize> = Vec::new();
        let mut triplets = Vec::new();
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.vals[k];
                let r = self.cols[k];
                for q in other.row_ptr[r]..other.row_ptr[r + 1] {
                    let j = other.cols[q];
                    if !touched[j] {
                        touched[j] = true;
                        hits.push(j);
                    }
                    acc[j] += a * other.vals[q];
                }
            }
            for &j in &hits {
                triplets.push((i, j, acc[j]));
                acc[j] = C64::new(0.0, 0.0);
                touched[j] = false;
            }
            hits.clear();
        }
        Csr::from_triplets(self.dim, triplets)
    }

    /// Returns the diagonal when the matrix has no off-diagonal entries.
    pub(crate) fn diagonal(&self) -> Option<Vec<C64>> {
        let mut d = vec![C64::new(0.0, 0.0); self.dim];
        for (i, j, v) in self.entries() {
            if i != j {
                return None;
            }
            d[i] = v;
        }
        Some(d)
    }

    /// `out += alpha · self · x` for a column-major dense `x`.
    pub(crate) fn left_mul_acc(&self, x: &[C64], alpha: C64, out: &mut [C64]) {
        let d = self.dim;
        for j in 0..d {
            let xc = &x[j * d..(j + 1) * d];
            let oc = &mut out[j * d..(j + 1) * d];
            for (i, o) in oc.iter_mut().enumerate() {
                let mut s = C64::new(0.0, 0.0);
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.vals[k] * xc[self.cols[k]];
                }
                *o += alpha * s;
            }
        }
    }

    /// `out += alpha · x · self` for a column-major dense `x`.
    pub(crate) fn right_mul_acc(&self, x: &[C64], alpha: C64, out: &mut [C64]) {
        let d = self.dim;
        for r in 0..d {
            let xc = &x[r * d..(r + 1) * d];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let j = self.cols[k];
                let w = alpha * self.vals[k];
                let oc = &mut out[j * d..(j + 1) * d];
                for (o, &xv) in oc.iter_mut().zip(xc) {
                    *o += w * xv;
                }
            }
        }
    }
}
