use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free rows.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets. Duplicate
    /// positions are summed; rows come out sorted by column.
    pub fn from_triplets(
        entries: &[(usize, usize, f64)],
        nrows: usize,
        ncols: usize,
    ) -> Result<Self> {
        for &(r, c, v) in entries {
            if r >= nrows || c >= ncols {
                return Err(Error::IndexOutOfRange {
                    row: r,
                    col: c,
                    value: v,
                    nrows,
                    ncols,
                });
            }
        }

        // Counting sort by row keeps construction O(nnz + nrows) and
        // deterministic.
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in entries {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut by_row: Vec<(usize, f64)> = vec![(0, 0.0); entries.len()];
        let mut cursor = counts.clone();
        for &(r, c, v) in entries {
            by_row[cursor[r]] = (c, v);
            cursor[r] += 1;
        }

        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        for r in 0..nrows {
            let row = &mut by_row[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut sum = row[i].1;
                let mut j = i + 1;
                while j < row.len() && row[j].0 == c {
                    sum += row[j].1;
                    j += 1;
                }
                col_indices.push(c);
                values.push(sum);
                i = j;
            }
            row_offsets.push(col_indices.len());
        }

        Ok(CsrMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Stored value at (r, c), or 0.0 when the position is not in the
    /// sparsity pattern.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// y = A x with a fixed ascending-column summation order per row, so the
    /// result is bitwise reproducible.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                found: x.len(),
                context: "spmv operand",
            });
        }
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        Ok(y)
    }

    /// y = A^T x. Rows are scattered in ascending order, so the per-entry
    /// accumulation order is fixed.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                found: x.len(),
                context: "transpose spmv operand",
            });
        }
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * x[r];
            }
        }
        Ok(y)
    }

    /// Dense row-major reconstruction; intended for small matrices and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows * self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[r * self.ncols + c] = v;
            }
        }
        out
    }

    /// Largest absolute entry (0.0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
