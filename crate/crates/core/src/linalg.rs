//! Hermitian spectra and distances.
//!
//! Matrices that decompose into independent blocks under a permutation of
//! the basis (embedded Dicke mixtures, diagonal Hamiltonians) are split along
//! the connected components of their nonzero pattern before diagonalizing,
//! which keeps the `2^12`-dimensional cases tractable.

use alloc::vec;
use alloc::vec::Vec;

use crate::operator::{CMatrix, C64};

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Index sets of the blocks of a matrix whose off-diagonal couplings are the
/// nonzero entries.
pub(crate) fn blocks(m: &CMatrix) -> Vec<Vec<usize>> {
    let d = m.nrows();
    let mut parent: Vec<usize> = (0..d).collect();
    for j in 0..d {
        for i in 0..j {
            let a = m[(i, j)];
            let b = m[(j, i)];
            if a.re != 0.0 || a.im != 0.0 || b.re != 0.0 || b.im != 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut slot = vec![usize::MAX; d];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..d {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Vec::new());
        }
        out[slot[r]].push(i);
    }
    out
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows());
    for block in blocks(m) {
        if block.len() == 1 {
            out.push(m[(block[0], block[0])].re);
            continue;
        }
        let k = block.len();
        let sub = CMatrix::from_fn(k, k, |i, j| m[(block[i], block[j])]);
        out.extend(sub.symmetric_eigenvalues().iter().copied());
    }
    out.sort_by(f64::total_cmp);
    out
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// `½ ‖a − b‖₁` for Hermitian `a`, `b`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = a - b;
    0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>()
}

/// Largest entry modulus of a complex slice.
pub(crate) fn max_abs(xs: &[C64]) -> f64 {
    xs.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}
