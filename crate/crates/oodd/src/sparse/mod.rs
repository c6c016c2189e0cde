//! Minimal sparse/dense linear algebra kernels: CSR storage, a reusable
//! sparse LDL^T factorization for SPD systems, and dense symmetric
//! eigensolves for desk-scale spectral checks.

pub mod csr;
pub mod dense;
pub mod ldl;

pub use csr::CsrMatrix;
pub use dense::{dense_generalized_eigvals, DenseMat, DenseSymmetricPencil};
pub use ldl::SpdFactorization;

use crate::error::Result;

/// Builds a CSR matrix from triplets; duplicates are summed.
pub fn csr_from_triplets(
    entries: &[(usize, usize, f64)],
    nrows: usize,
    ncols: usize,
) -> Result<CsrMatrix> {
    CsrMatrix::from_triplets(entries, nrows, ncols)
}

/// y = A x.
pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.spmv(x)
}

/// Factorizes a symmetric positive definite matrix for repeated solves.
pub fn factorize_spd(a: &CsrMatrix) -> Result<SpdFactorization> {
    SpdFactorization::new(a)
}

/// Solves K x = b against a prepared factorization.
pub fn solve_spd(f: &SpdFactorization, b: &[f64]) -> Result<Vec<f64>> {
    f.solve(b)
}

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
