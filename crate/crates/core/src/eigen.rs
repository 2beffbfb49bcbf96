//! Symmetric eigendecomposition with a fixed ordering and sign convention.
//!
//! Ordering: eigenvalues descending. Eigenvalues that agree to
//! `1e-12 * max(1, max|λ|)` form a tie cluster, ordered by the index of the
//! eigenvector's largest-magnitude entry.
//!
//! Sign: every eigenvector has a non-negative entry sum; when the sum is zero
//! (to `1e-12`) the first non-negligible entry is positive.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

const SIGN_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;

/// Eigenvalues sorted descending with matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, k: usize) -> ndarray::ArrayView1<'_, f64> {
        self.vectors.column(k)
    }
}

/// Flip `v` in place so it satisfies the sign convention.
pub fn apply_sign_convention(mut v: ArrayViewMut1<'_, f64>) {
    let sum: f64 = v.sum();
    let flip = if sum.abs() > SIGN_TOL {
        sum < 0.0
    } else {
        v.iter().find(|x| x.abs() > SIGN_TOL).is_some_and(|&x| x < 0.0)
    };
    if flip {
        v.mapv_inplace(|x| -x);
    }
}

fn argmax_abs(v: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_abs = f64::NEG_INFINITY;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best = i;
            best_abs = x.abs();
        }
    }
    best
}

/// Full eigendecomposition of a real symmetric matrix.
///
/// The input is symmetrized as `(A + A^T) / 2` first. Output is a pure
/// function of the input bits.
pub fn sym_eig_sorted(matrix: ArrayView2<'_, f64>) -> Result<Spectrum, EigenError> {
    let (rows, cols) = matrix.dim();
    if rows != cols {
        return Err(EigenError::NotSquare { rows, cols });
    }
    if let Some(((row, col), _)) = matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(EigenError::NonFinite { row, col });
    }
    let n = rows;
    if n == 0 {
        return Ok(Spectrum { values: Array1::zeros(0), vectors: Array2::zeros((0, 0)) });
    }

    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (matrix[[i, j]] + matrix[[j, i]]));
    let eig = SymmetricEigen::new(sym);

    let mut vectors = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let mut col = vectors.column_mut(k);
        for i in 0..n {
            col[i] = eig.eigenvectors[(i, k)];
        }
        apply_sign_convention(col);
    }

    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));

    let scale = raw.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && raw[order[end - 1]] - raw[order[end]] <= TIE_TOL * scale {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by_key(|&k| (argmax_abs(vectors.column(k)), k));
        }
        start = end;
    }

    let values = Array1::from_iter(order.iter().map(|&k| raw[k]));
    let mut sorted = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        sorted.column_mut(dst).assign(&vectors.column(src));
    }
    Ok(Spectrum { values, vectors: sorted })
}
