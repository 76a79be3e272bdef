//! Small sparse and dense helpers shared by the assembly and solver modules.

use nalgebra::{DMatrix, SymmetricEigen};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};

pub type Csr = CsMat<f64>;

/// `y = A x` for a CSR matrix.
pub fn spmv(a: &Csr, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    spmv_into(a, x, &mut y);
    y
}

pub fn spmv_into(a: &Csr, x: &[f64], y: &mut [f64]) {
    debug_assert!(a.is_csr());
    for (i, row) in a.outer_iterator().enumerate() {
        let mut s = 0.0;
        for (j, &v) in row.iter() {
            s += v * x[j];
        }
        y[i] = s;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn diagonal(a: &Csr) -> Vec<f64> {
    (0..a.rows()).map(|i| a.get(i, i).copied().unwrap_or(0.0)).collect()
}

/// Symmetric quadratic form `xᵀ A y`.
pub fn form(a: &Csr, x: &[f64], y: &[f64]) -> f64 {
    dot(x, &spmv(a, y))
}

pub fn to_dense(a: &Csr) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.rows(), a.cols());
    for (i, row) in a.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            d[(i, j)] += v;
        }
    }
    d
}

pub fn from_dense(d: &DMatrix<f64>, drop_tol: f64) -> Csr {
    let mut t = TriMat::new((d.nrows(), d.ncols()));
    for j in 0..d.ncols() {
        for i in 0..d.nrows() {
            let v = d[(i, j)];
            if v.abs() > drop_tol {
                t.add_triplet(i, j, v);
            }
        }
    }
    t.to_csr()
}

/// Principal submatrix `A[idx, idx]` as CSR; `idx` need not be sorted.
pub fn submatrix(a: &Csr, idx: &[usize]) -> Csr {
    let mut pos = vec![usize::MAX; a.cols()];
    for (k, &i) in idx.iter().enumerate() {
        pos[i] = k;
    }
    let mut t = TriMat::new((idx.len(), idx.len()));
    for (k, &i) in idx.iter().enumerate() {
        if let Some(row) = a.outer_view(i) {
            for (j, &v) in row.iter() {
                if pos[j] != usize::MAX {
                    t.add_triplet(k, pos[j], v);
                }
            }
        }
    }
    t.to_csr()
}

/// `(A + Aᵀ)/2`, exactly symmetric in value and pattern.
pub fn symmetrize(a: &Csr) -> Csr {
    let t = a.transpose_view().to_csr();
    let s = a + &t;
    s.map(|v| 0.5 * v)
}

/// Largest absolute entry of `A - Aᵀ` relative to the largest entry of `A`.
pub fn asymmetry(a: &Csr) -> f64 {
    let mut max_a: f64 = 0.0;
    let mut max_d: f64 = 0.0;
    for (i, row) in a.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            max_a = max_a.max(v.abs());
            let t = a.get(j, i).copied().unwrap_or(0.0);
            max_d = max_d.max((v - t).abs());
        }
    }
    if max_a == 0.0 {
        0.0
    } else {
        max_d / max_a
    }
}

/// Coordinate text export, one `row col value` triple per line.
pub fn to_coo_text(a: &Csr) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "% {} {} {}", a.rows(), a.cols(), a.nnz());
    for (i, row) in a.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            let _ = writeln!(s, "{i} {j} {v:.17e}");
        }
    }
    s
}

/// Eigenvalues (ascending) of the symmetric pencil `(A, B)` with `B` positive
/// definite.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = b.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("pencil denominator".into()))?;
    let l = chol.l();
    let li =
        l.clone().try_inverse().ok_or_else(|| Error::NotPositiveDefinite("pencil denominator".into()))?;
    let c = &li * a * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    Ok(sorted_eigenvalues(c))
}

/// Eigenvalues (ascending) of the pencil `(A, B)` with `B` only positive
/// semidefinite: the pencil is restricted to the range of `B`, dropping the
/// eigenvectors of `B` whose eigenvalue is below `rel_tol * λ_max(B)`.
pub fn deflated_generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> Vec<f64> {
    let bs = (b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(bs);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> =
        (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] > rel_tol * lmax).collect();
    if keep.is_empty() {
        return Vec::new();
    }
    let n = a.nrows();
    let mut z = DMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let s = 1.0 / eig.eigenvalues[k].sqrt();
        for r in 0..n {
            z[(r, c)] = eig.eigenvectors[(r, k)] * s;
        }
    }
    let c = z.transpose() * a * &z;
    let c = (&c + c.transpose()) * 0.5;
    sorted_eigenvalues(c)
}

pub fn sorted_eigenvalues(c: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
