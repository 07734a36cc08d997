//! Dense symmetric linear algebra: eigendecomposition, SPD solves and PSD projection.
//!
//! Storage is row-major and always built from the upper triangle, so
//! `get(i, j) == get(j, i)` holds bit-for-bit.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{AqkaError, Result};

/// Relative residual target for SPD solves.
pub const SOLVE_REL_TOL: f64 = 1e-10;

/// Default eigenvalue floor for PSD projection.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "SymMatrix dimension must be at least 1");
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * m.n + i] = v;
        }
        m
    }

    /// Builds a matrix by evaluating `f(i, j)` for `i <= j` and mirroring.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from a dense matrix using only its upper triangle.
    pub fn from_dmatrix_upper(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        Self::from_fn(a.nrows(), |i, j| a[(i, j)])
    }

    /// Builds from a row-major square array, symmetrizing as (A + Aᵀ)/2.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(AqkaError::invalid("empty matrix"));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(AqkaError::invalid("matrix is not square"));
        }
        Ok(Self::from_fn(n, |i, j| 0.5 * (rows[i][j] + rows[j][i])))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add_diag(&self, ridge: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            m.data[i * self.n + i] += ridge;
        }
        m
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.n, other.n);
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    /// Spectral norm, computed from the eigenvalues.
    pub fn op_norm(&self) -> Result<f64> {
        let e = sym_eig(self)?;
        Ok(e.values.iter().fold(0.0f64, |m, w| m.max(w.abs())))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(sym_eig(self)?.values[0])
    }

    /// Mean of the strictly off-diagonal entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                s += self.get(i, j);
            }
        }
        s / (self.n * (self.n - 1) / 2) as f64
    }

    /// Principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), |a, b| self.get(idx[a], idx[b]))
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn sym_eig(m: &SymMatrix) -> Result<SymEig> {
    if !m.is_finite() {
        return Err(AqkaError::invalid("non-finite matrix entry"));
    }
    let eig = SymmetricEigen::new(m.to_dmatrix());
    let n = m.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

impl SymEig {
    /// `V diag(f(w)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let w: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let scaled = &self.vectors * DMatrix::from_diagonal(&DVector::from_vec(w));
        SymMatrix::from_dmatrix_upper(&(scaled * self.vectors.transpose()))
    }
}

/// Solves `(m + ridge·I) x = rhs` by Cholesky factorization.
pub fn solve_spd(m: &SymMatrix, rhs: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if rhs.len() != m.n() {
        return Err(AqkaError::invalid(format!(
            "rhs length {} does not match dimension {}",
            rhs.len(),
            m.n()
        )));
    }
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(AqkaError::invalid("ridge must be finite and non-negative"));
    }
    let a = m.add_diag(ridge).to_dmatrix();
    let chol = a
        .cholesky()
        .ok_or_else(|| AqkaError::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let x = chol.solve(&DVector::from_column_slice(rhs));
    Ok(x.iter().copied().collect())
}

/// Cholesky-factors `m + ridge·I` once for repeated solves.
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    pub fn new(m: &SymMatrix, ridge: f64) -> Result<Self> {
        let chol = m
            .add_diag(ridge)
            .to_dmatrix()
            .cholesky()
            .ok_or_else(|| AqkaError::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        Ok(SpdFactor { chol })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.chol
            .solve(&DVector::from_column_slice(rhs))
            .iter()
            .copied()
            .collect()
    }

    /// The full inverse `(m + ridge·I)⁻¹`.
    pub fn inverse(&self) -> SymMatrix {
        SymMatrix::from_dmatrix_upper(&self.chol.inverse())
    }
}

/// Clips eigenvalues below `eig_floor`. Returns `m` unchanged when it already
/// satisfies the floor.
pub fn psd_project(m: &SymMatrix, eig_floor: f64) -> Result<SymMatrix> {
    let e = sym_eig(m)?;
    if e.values[0] >= eig_floor {
        return Ok(m.clone());
    }
    Ok(e.reconstruct_with(|w| w.max(eig_floor)))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
