//! Sparse LDL^T factorization for symmetric positive definite matrices,
//! in the classic up-looking elimination-tree formulation. The factor is
//! built once and reused for many right-hand sides.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::sparse::csr::CsrMatrix;

/// Reusable direct factorization K = L D L^T of an SPD matrix.
///
/// `L` is unit lower triangular, stored by columns with the unit diagonal
/// implicit; `D` is the positive pivot diagonal.
#[derive(Clone, Debug)]
pub struct SpdFactorization {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

/// Upper bound on sampled symmetry probes at build time.
const SYMMETRY_SAMPLES: usize = 10_000;

impl SpdFactorization {
    /// Factorizes a symmetric positive definite CSR matrix.
    ///
    /// Symmetry is verified on sampled entry pairs and positivity through a
    /// random Rayleigh-quotient spot check plus the pivot signs themselves;
    /// a non-positive pivot reports an SPD violation.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.ncols(),
                context: "factorize_spd operand must be square",
            });
        }
        check_symmetry_sampled(a)?;
        rayleigh_spot_check(a)?;
        if n == 0 {
            return Ok(SpdFactorization {
                n,
                col_ptr: vec![0],
                row_idx: Vec::new(),
                values: Vec::new(),
                diag: Vec::new(),
            });
        }

        // Symbolic pass: elimination tree and per-column fill counts. The
        // upper-triangular column k of the symmetric input is read off row k
        // of the CSR storage (entries with column index <= k).
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut counts = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let (cols, _) = a.row(k);
            for &i0 in cols.iter().take_while(|&&c| c < k) {
                let mut i = i0;
                while flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    counts[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + counts[k];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0f64; nnz];
        let mut diag = vec![0.0f64; n];

        // Numeric pass: one sparse triangular solve per row of L.
        let mut fill = vec![0usize; n];
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        let mut path = vec![0usize; n];
        flag.iter_mut().for_each(|f| *f = usize::MAX);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let (cols, vals) = a.row(k);
            for (&i0, &aik) in cols.iter().zip(vals) {
                if i0 > k {
                    break;
                }
                y[i0] += aik;
                if i0 < k {
                    let mut len = 0;
                    let mut i = i0;
                    while flag[i] != k {
                        path[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                    while len > 0 {
                        len -= 1;
                        top -= 1;
                        pattern[top] = path[len];
                    }
                }
            }
            diag[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let lo = col_ptr[i];
                let hi = lo + fill[i];
                for p in lo..hi {
                    y[row_idx[p]] -= values[p] * yi;
                }
                let l_ki = yi / diag[i];
                diag[k] -= l_ki * yi;
                row_idx[hi] = k;
                values[hi] = l_ki;
                fill[i] += 1;
            }
            if diag[k] <= 0.0 {
                return Err(Error::SpdViolation {
                    index: k,
                    pivot: diag[k],
                });
            }
        }

        Ok(SpdFactorization {
            n,
            col_ptr,
            row_idx,
            values,
            diag,
        })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Nonzeros in the strictly lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// Solves K x = b for the factorized K. Deterministic: repeated calls
    /// with the same data return bit-identical results.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: b.len(),
                context: "solve_spd right-hand side",
            });
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    /// In-place variant of [`solve`](Self::solve) for hot loops.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                    x[self.row_idx[p]] -= self.values[p] * xj;
                }
            }
        }
        for j in 0..self.n {
            x[j] /= self.diag[j];
        }
        for j in (0..self.n).rev() {
            let mut acc = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc -= self.values[p] * x[self.row_idx[p]];
            }
            x[j] = acc;
        }
    }

    pub(crate) fn raw_parts(&self) -> (&[usize], &[usize], &[f64], &[f64]) {
        (&self.col_ptr, &self.row_idx, &self.values, &self.diag)
    }

    pub(crate) fn from_raw_parts(
        n: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
        diag: Vec<f64>,
    ) -> Result<Self> {
        if col_ptr.len() != n + 1
            || diag.len() != n
            || row_idx.len() != *col_ptr.last().unwrap_or(&0)
            || values.len() != row_idx.len()
        {
            return Err(Error::Config(
                "inconsistent factorization payload".to_string(),
            ));
        }
        if diag.iter().any(|&d| d <= 0.0 || !d.is_finite()) {
            return Err(Error::Config(
                "factorization payload has non-positive pivots".to_string(),
            ));
        }
        Ok(SpdFactorization {
            n,
            col_ptr,
            row_idx,
            values,
            diag,
        })
    }
}

fn check_symmetry_sampled(a: &CsrMatrix) -> Result<()> {
    let nnz = a.nnz();
    if nnz == 0 {
        return Ok(());
    }
    let scale = a.max_abs().max(1.0);
    let mut rng = SplitMix64::new(0x1837_u64 ^ (a.nrows() as u64).rotate_left(17));
    let samples = nnz.min(SYMMETRY_SAMPLES);
    let offsets = a.row_offsets();
    for _ in 0..samples {
        let e = rng.next_index(nnz);
        // Row of entry e by binary search on the offsets.
        let row = match offsets.binary_search(&e) {
            Ok(mut r) => {
                while r + 1 < offsets.len() && offsets[r + 1] == e {
                    r += 1;
                }
                r
            }
            Err(ins) => ins - 1,
        };
        let col = a.col_indices()[e];
        let v = a.values()[e];
        let vt = a.get(col, row);
        if (v - vt).abs() > 1e-12 * scale {
            return Err(Error::NotSymmetric {
                row,
                col,
                diff: (v - vt).abs(),
            });
        }
    }
    Ok(())
}

fn rayleigh_spot_check(a: &CsrMatrix) -> Result<()> {
    let n = a.nrows();
    if n == 0 {
        return Ok(());
    }
    let mut rng = SplitMix64::new(0x5eed_u64 ^ (n as u64).rotate_left(32));
    for probe in 0..3 {
        let x = rng.vector(n);
        let ax = a.spmv(&x).expect("dimensions checked");
        let q: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        if q <= 0.0 {
            return Err(Error::SpdViolation {
                index: probe,
                pivot: q,
            });
        }
    }
    Ok(())
}
