//! Dense kernels for desk-scale verification: LU solves for oracles,
//! Cholesky, and a symmetric (generalized) eigensolver in the classic
//! Householder-tridiagonalization + implicit-QL formulation.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug)]
pub struct DenseMat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMat {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DenseMat::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m.data[i * ncols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(nrows: usize, ncols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), nrows * ncols);
        DenseMat { nrows, ncols, data }
    }

    pub fn identity(n: usize) -> Self {
        DenseMat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] += v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for j in (i + 1)..self.ncols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Replaces the matrix by (A + A^T)/2.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for j in (i + 1)..self.ncols {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, avg);
                self.set(j, i, avg);
            }
        }
    }
}

/// Solves A x = b by Gaussian elimination with partial pivoting. Used as an
/// independent oracle against the sparse direct solver.
pub fn lu_solve(a: &DenseMat, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows;
    if a.ncols != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
            context: "dense lu solve",
        });
    }
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if m[i * n + k].abs() > m[piv * n + k].abs() {
                piv = i;
            }
        }
        if m[piv * n + k] == 0.0 {
            return Err(Error::SpdViolation { index: k, pivot: 0.0 });
        }
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            x.swap(k, piv);
        }
        for i in (k + 1)..n {
            let factor = m[i * n + k] / m[k * n + k];
            if factor != 0.0 {
                for j in k..n {
                    m[i * n + j] -= factor * m[k * n + j];
                }
                x[i] -= factor * x[k];
            }
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= m[i * n + j] * x[j];
        }
        x[i] = acc / m[i * n + i];
    }
    Ok(x)
}

/// Determinant via LU with partial pivoting; sign changes of
/// `det(A - lambda M)` drive the root-counting oracle in tests.
pub fn lu_det(a: &DenseMat) -> f64 {
    let n = a.nrows;
    assert_eq!(a.ncols, n);
    let mut m = a.data.clone();
    let mut det = 1.0;
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if m[i * n + k].abs() > m[piv * n + k].abs() {
                piv = i;
            }
        }
        if m[piv * n + k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            det = -det;
        }
        det *= m[k * n + k];
        for i in (k + 1)..n {
            let factor = m[i * n + k] / m[k * n + k];
            if factor != 0.0 {
                for j in k..n {
                    m[i * n + j] -= factor * m[k * n + j];
                }
            }
        }
    }
    det
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(a: &DenseMat) -> Result<DenseMat> {
    let n = a.nrows;
    assert_eq!(a.ncols, n);
    let mut l = DenseMat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a.get(i, j);
            for k in 0..j {
                acc -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::SpdViolation { index: i, pivot: acc });
                }
                l.set(i, j, acc.sqrt());
            } else {
                l.set(i, j, acc / l.get(j, j));
            }
        }
    }
    Ok(l)
}

fn forward_solve(l: &DenseMat, b: &[f64]) -> Vec<f64> {
    let n = l.nrows;
    let mut x = b.to_vec();
    for i in 0..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= l.get(i, j) * x[j];
        }
        x[i] = acc / l.get(i, i);
    }
    x
}

/// Eigenvalues (ascending) and optionally the orthonormal eigenvectors of a
/// symmetric matrix, by Householder tridiagonalization followed by implicit
/// QL iteration.
pub fn sym_eigen(a: &DenseMat, want_vectors: bool) -> Result<(Vec<f64>, Option<DenseMat>)> {
    let n = a.nrows;
    assert_eq!(a.ncols, n);
    if n == 0 {
        return Ok((Vec::new(), want_vectors.then(|| DenseMat::zeros(0, 0))));
    }
    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e, want_vectors);
    tql2(&mut v, &mut d, &mut e, want_vectors)?;
    Ok((d, want_vectors.then_some(v)))
}

/// Householder reduction to tridiagonal form (EISPACK `tred2`).
fn tred2(v: &mut DenseMat, d: &mut [f64], e: &mut [f64], accumulate: bool) {
    let n = d.len();
    for j in 0..n {
        d[j] = v.get(n - 1, j);
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v.get(i - 1, j);
                v.set(i, j, 0.0);
                v.set(j, i, 0.0);
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            for j in 0..i {
                let f = d[j];
                v.set(j, i, f);
                let mut g = e[j] + v.get(j, j) * f;
                for k in (j + 1)..i {
                    g += v.get(k, j) * d[k];
                    e[k] += v.get(k, j) * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    let upd = v.get(k, j) - (f * e[k] + g * d[k]);
                    v.set(k, j, upd);
                }
                d[j] = v.get(i - 1, j);
                v.set(i, j, 0.0);
            }
        }
        d[i] = h;
    }

    if accumulate {
        for i in 0..(n - 1) {
            v.set(n - 1, i, v.get(i, i));
            v.set(i, i, 1.0);
            let h = d[i + 1];
            if h != 0.0 {
                for k in 0..=i {
                    d[k] = v.get(k, i + 1) / h;
                }
                for j in 0..=i {
                    let mut g = 0.0;
                    for k in 0..=i {
                        g += v.get(k, i + 1) * v.get(k, j);
                    }
                    for k in 0..=i {
                        let upd = v.get(k, j) - g * d[k];
                        v.set(k, j, upd);
                    }
                }
            }
            for k in 0..=i {
                v.set(k, i + 1, 0.0);
            }
        }
        for j in 0..n {
            d[j] = v.get(n - 1, j);
            v.set(n - 1, j, 0.0);
        }
        v.set(n - 1, n - 1, 1.0);
    } else {
        // Without accumulation the tridiagonal diagonal stays on the
        // diagonal of the working array.
        for j in 0..n {
            d[j] = v.get(j, j);
        }
    }
    e[0] = 0.0;
}

/// Implicit QL iteration on the symmetric tridiagonal form (EISPACK `tql2`).
fn tql2(v: &mut DenseMat, d: &mut [f64], e: &mut [f64], accumulate: bool) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 64 {
                    return Err(Error::Divergence { iteration: iter });
                }

                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    if accumulate {
                        for k in 0..n {
                            let h = v.get(k, i + 1);
                            v.set(k, i + 1, s * v.get(k, i) + c * h);
                            v.set(k, i, c * v.get(k, i) - s * h);
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Ascending order, permuting eigenvectors along.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in (i + 1)..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            if accumulate {
                for row in 0..n {
                    let tmp = v.get(row, i);
                    v.set(row, i, v.get(row, k));
                    v.set(row, k, tmp);
                }
            }
        }
    }
    Ok(())
}

/// Desk-scale cap on dense eigen-analyses.
pub const DENSE_EIG_LIMIT: usize = 5000;

/// Symmetric pencil (A, M) with M symmetric positive definite; carrier for
/// generalized eigenvalue computations A v = lambda M v.
#[derive(Clone, Debug)]
pub struct DenseSymmetricPencil {
    a: DenseMat,
    m: DenseMat,
}

impl DenseSymmetricPencil {
    /// Validates symmetry of both matrices to 1e-12 relative and that `m`
    /// is positive definite.
    pub fn new(a: DenseMat, m: DenseMat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.nrows(),
                context: "pencil dimensions",
            });
        }
        let tol_a = 1e-12 * a.max_abs().max(1.0);
        if a.asymmetry() > tol_a {
            return Err(Error::SymmetryViolation { defect: a.asymmetry() });
        }
        let tol_m = 1e-12 * m.max_abs().max(1.0);
        if m.asymmetry() > tol_m {
            return Err(Error::SymmetryViolation { defect: m.asymmetry() });
        }
        cholesky(&m)?;
        Ok(DenseSymmetricPencil { a, m })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DenseMat {
        &self.a
    }

    pub fn m(&self) -> &DenseMat {
        &self.m
    }
}

/// All eigenvalues of A v = lambda M v, ascending. Reduces to a standard
/// symmetric problem through the Cholesky factor of M.
pub fn dense_generalized_eigvals(pencil: &DenseSymmetricPencil) -> Result<Vec<f64>> {
    let n = pencil.dim();
    if n > DENSE_EIG_LIMIT {
        return Err(Error::DenseScaleGuard {
            n,
            limit: DENSE_EIG_LIMIT,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let l = cholesky(&pencil.m)?;

    // C = L^-1 A L^-T, formed column-by-column then row-by-row.
    let mut y = DenseMat::zeros(n, n);
    for j in 0..n {
        let col = forward_solve(&l, &pencil.a.column(j));
        for i in 0..n {
            y.set(i, j, col[i]);
        }
    }
    let mut c = DenseMat::zeros(n, n);
    for i in 0..n {
        let row = forward_solve(&l, y.row(i));
        for j in 0..n {
            c.set(i, j, row[j]);
        }
    }
    c.symmetrize();

    let (vals, _) = sym_eigen(&c, false)?;
    Ok(vals)
}
