//! Nested uniform Cartesian Q1 meshes on the unit square: DOF numbering,
//! stiffness/load assembly for piecewise-constant-per-fine-cell coefficients,
//! and the canonical coarse-to-fine prolongation.
//!
//! Degrees of freedom are the interior nodes only (homogeneous Dirichlet),
//! numbered lexicographically with x fastest. All assembly uses the exact
//! closed-form Q1 element matrix scaled by the cell coefficient, so outputs
//! are bit-reproducible.

use crate::error::{Error, Result};
use crate::sparse::{csr_from_triplets, CsrMatrix};

/// Exact Q1 stiffness element matrix for unit coefficient on a square cell
/// (size-independent in 2D). Local corner order: (0,0), (1,0), (0,1), (1,1).
pub const Q1_STIFFNESS: [[f64; 4]; 4] = [
    [2.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0],
    [-1.0 / 6.0, 2.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 6.0, -1.0 / 3.0, 2.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, 2.0 / 3.0],
];

/// Local corner offsets matching [`Q1_STIFFNESS`].
pub const CORNER_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshLevel {
    Fine,
    Coarse,
}

/// Nested fine/coarse Cartesian meshes aligned with the eps-periodic cell
/// grid: h | eps | H with integer ratios >= 2.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    h: f64,
    coarse_h: f64,
    eps: f64,
    n_fine: usize,
    n_coarse: usize,
    n_cells_eps: usize,
}

fn reciprocal_cells(width: f64, name: &str) -> Result<usize> {
    if !(width > 0.0) || width > 0.5 {
        return Err(Error::Config(format!(
            "{name} = {width} must lie in (0, 1/2]"
        )));
    }
    let n = (1.0 / width).round();
    if ((n * width) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "1/{name} = {} is not an integer",
            1.0 / width
        )));
    }
    Ok(n as usize)
}

impl MeshHierarchy {
    /// Validates the nesting/alignment constraints and freezes the counts.
    pub fn build(h: f64, coarse_h: f64, eps: f64) -> Result<Self> {
        let n_fine = reciprocal_cells(h, "h")?;
        let n_coarse = reciprocal_cells(coarse_h, "H")?;
        let n_cells_eps = reciprocal_cells(eps, "eps")?;
        if !n_fine.is_power_of_two() {
            return Err(Error::Config(format!(
                "1/h = {n_fine} must be a power of two"
            )));
        }
        if !(eps < coarse_h) {
            return Err(Error::Config(format!(
                "eps < H violated: eps = {eps}, H = {coarse_h}"
            )));
        }
        if n_fine % n_cells_eps != 0 || n_fine / n_cells_eps < 2 {
            return Err(Error::Config(format!(
                "eps/h must be an integer >= 2, got {}",
                eps / h
            )));
        }
        if n_cells_eps % n_coarse != 0 || n_cells_eps / n_coarse < 2 {
            return Err(Error::Config(format!(
                "H/eps must be an integer >= 2, got {}",
                coarse_h / eps
            )));
        }
        Ok(MeshHierarchy {
            h,
            coarse_h,
            eps,
            n_fine,
            n_coarse,
            n_cells_eps,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn coarse_h(&self) -> f64 {
        self.coarse_h
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Fine cells per side (1/h).
    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    /// Coarse cells per side (1/H).
    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    /// eps-cells per side (1/eps).
    pub fn n_cells_eps(&self) -> usize {
        self.n_cells_eps
    }

    pub fn fine_dof_count(&self) -> usize {
        (self.n_fine - 1) * (self.n_fine - 1)
    }

    pub fn coarse_dof_count(&self) -> usize {
        (self.n_coarse - 1) * (self.n_coarse - 1)
    }

    /// Fine cells per coarse cell side (H/h).
    pub fn fine_per_coarse(&self) -> usize {
        self.n_fine / self.n_coarse
    }

    /// Fine cells per eps-cell side (eps/h).
    pub fn cell_resolution(&self) -> usize {
        self.n_fine / self.n_cells_eps
    }

    /// eps-cells per coarse cell side (H/eps).
    pub fn eps_per_coarse(&self) -> usize {
        self.n_cells_eps / self.n_coarse
    }

    /// DOF index of fine node (ix, iy), or None on the Dirichlet boundary.
    pub fn fine_dof(&self, ix: usize, iy: usize) -> Option<usize> {
        if ix >= 1 && ix < self.n_fine && iy >= 1 && iy < self.n_fine {
            Some((iy - 1) * (self.n_fine - 1) + (ix - 1))
        } else {
            None
        }
    }

    /// DOF index of coarse node (ix, iy), or None on the boundary.
    pub fn coarse_dof(&self, ix: usize, iy: usize) -> Option<usize> {
        if ix >= 1 && ix < self.n_coarse && iy >= 1 && iy < self.n_coarse {
            Some((iy - 1) * (self.n_coarse - 1) + (ix - 1))
        } else {
            None
        }
    }

    /// Row-major index of fine cell (cx, cy).
    pub fn fine_cell_index(&self, cx: usize, cy: usize) -> usize {
        cy * self.n_fine + cx
    }
}

/// One coefficient value per fine cell, row-major, bounded by [alpha, beta].
#[derive(Clone, Debug)]
pub struct FineCoefficientField {
    values: Vec<f64>,
    alpha: f64,
    beta: f64,
}

impl FineCoefficientField {
    pub fn new(values: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || beta < alpha {
            return Err(Error::Config(format!(
                "ellipticity bounds violated: alpha = {alpha}, beta = {beta}"
            )));
        }
        if let Some(v) = values.iter().find(|v| **v < alpha || **v > beta) {
            return Err(Error::Config(format!(
                "coefficient value {v} outside [{alpha}, {beta}]"
            )));
        }
        Ok(FineCoefficientField {
            values,
            alpha,
            beta,
        })
    }

    pub fn constant(value: f64, hier: &MeshHierarchy) -> Self {
        FineCoefficientField {
            values: vec![value; hier.n_fine() * hier.n_fine()],
            alpha: value,
            beta: value,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Assembles the stiffness matrix on the interior DOFs of the requested
/// level. The coefficient lives on fine cells in both cases; coarse-level
/// integration still runs over fine cells, so the coarse operator matches
/// the Galerkin product with the prolongation exactly (nested Q1 spaces).
pub fn assemble_stiffness(
    level: MeshLevel,
    field: &FineCoefficientField,
    hier: &MeshHierarchy,
) -> Result<CsrMatrix> {
    let n = hier.n_fine();
    if field.values().len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: field.values().len(),
            context: "coefficient field length",
        });
    }
    match level {
        MeshLevel::Fine => assemble_fine(field, hier),
        MeshLevel::Coarse => assemble_coarse(field, hier),
    }
}

fn assemble_fine(field: &FineCoefficientField, hier: &MeshHierarchy) -> Result<CsrMatrix> {
    let n = hier.n_fine();
    let dofs = hier.fine_dof_count();
    let mut triplets = Vec::with_capacity(16 * n * n);
    for cy in 0..n {
        for cx in 0..n {
            let a = field.values()[hier.fine_cell_index(cx, cy)];
            let corners =
                CORNER_OFFSETS.map(|(dx, dy)| hier.fine_dof(cx + dx, cy + dy));
            for (m, &gm) in corners.iter().enumerate() {
                let Some(gi) = gm else { continue };
                for (k, &gk) in corners.iter().enumerate() {
                    let Some(gj) = gk else { continue };
                    triplets.push((gi, gj, a * Q1_STIFFNESS[m][k]));
                }
            }
        }
    }
    csr_from_triplets(&triplets, dofs, dofs)
}

/// Element stiffness of one coarse element against the fine-cell coefficient
/// values inside it, as a symmetric 4x4 block over its corner hats.
/// `coeff(lx, ly)` returns the coefficient of fine cell (lx, ly) local to
/// the element; `r` is the number of fine cells per coarse side.
pub(crate) fn coarse_element_block(r: usize, coeff: impl Fn(usize, usize) -> f64) -> [[f64; 4]; 4] {
    let mut block = [[0.0; 4]; 4];
    let rf = r as f64;
    for ly in 0..r {
        for lx in 0..r {
            let a = coeff(lx, ly);
            // hats[c][m]: value of coarse corner hat c at the fine cell's
            // corner m.
            let mut hats = [[0.0f64; 4]; 4];
            for (m, (dx, dy)) in CORNER_OFFSETS.iter().enumerate() {
                let xi = (lx + dx) as f64 / rf;
                let eta = (ly + dy) as f64 / rf;
                let vals = [
                    (1.0 - xi) * (1.0 - eta),
                    xi * (1.0 - eta),
                    (1.0 - xi) * eta,
                    xi * eta,
                ];
                for c in 0..4 {
                    hats[c][m] = vals[c];
                }
            }
            // block[c1][c2] += a * (hat_c1 at corners)^T K1 (hat_c2 at corners),
            // computed once per unordered pair and mirrored bit-identically.
            for c1 in 0..4 {
                for c2 in c1..4 {
                    let mut q = 0.0;
                    for m in 0..4 {
                        for k in 0..4 {
                            q += hats[c1][m] * Q1_STIFFNESS[m][k] * hats[c2][k];
                        }
                    }
                    let v = a * q;
                    block[c1][c2] += v;
                    if c1 != c2 {
                        block[c2][c1] += v;
                    }
                }
            }
        }
    }
    block
}

fn assemble_coarse(field: &FineCoefficientField, hier: &MeshHierarchy) -> Result<CsrMatrix> {
    let nc = hier.n_coarse();
    let r = hier.fine_per_coarse();
    let dofs = hier.coarse_dof_count();
    let mut triplets = Vec::with_capacity(16 * nc * nc);
    for ey in 0..nc {
        for ex in 0..nc {
            let block = coarse_element_block(r, |lx, ly| {
                field.values()[hier.fine_cell_index(ex * r + lx, ey * r + ly)]
            });
            let corners =
                CORNER_OFFSETS.map(|(dx, dy)| hier.coarse_dof(ex + dx, ey + dy));
            for (m, &gm) in corners.iter().enumerate() {
                let Some(gi) = gm else { continue };
                for (k, &gk) in corners.iter().enumerate() {
                    let Some(gj) = gk else { continue };
                    triplets.push((gi, gj, block[m][k]));
                }
            }
        }
    }
    csr_from_triplets(&triplets, dofs, dofs)
}

/// Stiffness matrix of a local square subgrid with homogeneous Dirichlet
/// data on its boundary: DOFs are the (side-1)^2 strictly interior local
/// nodes, row-major. `coeff(cx, cy)` gives the coefficient of local cell
/// (cx, cy); `side` counts cells per side.
pub(crate) fn assemble_local_dirichlet(
    side: usize,
    coeff: impl Fn(usize, usize) -> f64,
) -> CsrMatrix {
    let nd = side - 1;
    let dof = |ix: usize, iy: usize| -> Option<usize> {
        if ix >= 1 && ix <= nd && iy >= 1 && iy <= nd {
            Some((iy - 1) * nd + (ix - 1))
        } else {
            None
        }
    };
    let mut triplets = Vec::with_capacity(16 * side * side);
    for cy in 0..side {
        for cx in 0..side {
            let a = coeff(cx, cy);
            let corners = CORNER_OFFSETS.map(|(dx, dy)| dof(cx + dx, cy + dy));
            for (m, &gm) in corners.iter().enumerate() {
                let Some(gi) = gm else { continue };
                for (k, &gk) in corners.iter().enumerate() {
                    let Some(gj) = gk else { continue };
                    triplets.push((gi, gj, a * Q1_STIFFNESS[m][k]));
                }
            }
        }
    }
    csr_from_triplets(&triplets, nd * nd, nd * nd).expect("local indices are in range")
}

/// Like [`assemble_local_dirichlet`] but keeping every node of the closed
/// subgrid as a DOF (no boundary condition); used by the patch error
/// indicator, where the local energy form must see boundary values.
pub(crate) fn assemble_local_free(side: usize, coeff: impl Fn(usize, usize) -> f64) -> CsrMatrix {
    let nn = side + 1;
    let mut triplets = Vec::with_capacity(16 * side * side);
    for cy in 0..side {
        for cx in 0..side {
            let a = coeff(cx, cy);
            for (m, (dx1, dy1)) in CORNER_OFFSETS.iter().enumerate() {
                let gi = (cy + dy1) * nn + (cx + dx1);
                for (k, (dx2, dy2)) in CORNER_OFFSETS.iter().enumerate() {
                    let gj = (cy + dy2) * nn + (cx + dx2);
                    triplets.push((gi, gj, a * Q1_STIFFNESS[m][k]));
                }
            }
        }
    }
    csr_from_triplets(&triplets, nn * nn, nn * nn).expect("local indices are in range")
}

/// Fine-level load vector of an analytic right-hand side, integrated with
/// 2x2 Gauss quadrature per fine cell.
pub fn assemble_load(f: impl Fn(f64, f64) -> f64, hier: &MeshHierarchy) -> Vec<f64> {
    let n = hier.n_fine();
    let h = hier.h();
    let mut load = vec![0.0; hier.fine_dof_count()];
    // 2-point Gauss nodes on [0, 1].
    let g = 0.5 / 3.0f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let w = 0.25 * h * h;
    for cy in 0..n {
        for cx in 0..n {
            let corners = CORNER_OFFSETS.map(|(dx, dy)| hier.fine_dof(cx + dx, cy + dy));
            for &gx in &pts {
                for &gy in &pts {
                    let fv = f((cx as f64 + gx) * h, (cy as f64 + gy) * h);
                    let phi = [
                        (1.0 - gx) * (1.0 - gy),
                        gx * (1.0 - gy),
                        (1.0 - gx) * gy,
                        gx * gy,
                    ];
                    for (m, &gm) in corners.iter().enumerate() {
                        if let Some(gi) = gm {
                            load[gi] += w * fv * phi[m];
                        }
                    }
                }
            }
        }
    }
    load
}

/// Canonical prolongation P: coarse nodal values to fine nodal values by
/// bilinear interpolation. Rows are fine DOFs, columns coarse DOFs.
pub fn prolongation(hier: &MeshHierarchy) -> CsrMatrix {
    let r = hier.fine_per_coarse();
    let nf = hier.n_fine();
    let rf = r as f64;
    let mut triplets = Vec::new();
    for iy in 1..nf {
        for ix in 1..nf {
            let row = hier.fine_dof(ix, iy).expect("interior node");
            let ex = (ix - 1) / r; // coarse cell containing the node
            let ey = (iy - 1) / r;
            let xi = (ix - ex * r) as f64 / rf;
            let eta = (iy - ey * r) as f64 / rf;
            let weights = [
                (1.0 - xi) * (1.0 - eta),
                xi * (1.0 - eta),
                (1.0 - xi) * eta,
                xi * eta,
            ];
            for (m, (dx, dy)) in CORNER_OFFSETS.iter().enumerate() {
                if weights[m] == 0.0 {
                    continue;
                }
                if let Some(col) = hier.coarse_dof(ex + dx, ey + dy) {
                    triplets.push((row, col, weights[m]));
                }
            }
        }
    }
    csr_from_triplets(&triplets, hier.fine_dof_count(), hier.coarse_dof_count())
        .expect("prolongation indices are in range")
}

/// Galerkin triple product P^T K P, column by column.
pub fn galerkin_coarse(k_fine: &CsrMatrix, p: &CsrMatrix) -> Result<CsrMatrix> {
    let nc = p.ncols();
    let nf = p.nrows();
    if k_fine.nrows() != nf || k_fine.ncols() != nf {
        return Err(Error::DimensionMismatch {
            expected: nf,
            found: k_fine.nrows(),
            context: "galerkin_coarse operand",
        });
    }
    // Column lists of P.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
    for r in 0..nf {
        let (cidx, vals) = p.row(r);
        for (&c, &v) in cidx.iter().zip(vals) {
            cols[c].push((r, v));
        }
    }
    let mut triplets = Vec::new();
    let mut dense_col = vec![0.0; nf];
    for j in 0..nc {
        for &(r, v) in &cols[j] {
            dense_col[r] = v;
        }
        let kp = k_fine.spmv(&dense_col)?;
        let coarse_col = p.spmv_transpose(&kp)?;
        for (i, &v) in coarse_col.iter().enumerate() {
            if v != 0.0 {
                triplets.push((i, j, v));
            }
        }
        for &(r, _) in &cols[j] {
            dense_col[r] = 0.0;
        }
    }
    csr_from_triplets(&triplets, nc, nc)
}

/// sqrt(v^T K v); errors when the quadratic form comes out negative beyond
/// roundoff.
pub fn energy_norm(k: &CsrMatrix, v: &[f64]) -> Result<f64> {
    let kv = k.spmv(v)?;
    let q: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
    if q < 0.0 {
        let scale = k.max_abs() * v.iter().map(|x| x * x).sum::<f64>();
        if q < -1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SpdViolation { index: 0, pivot: q });
        }
        return Ok(0.0);
    }
    Ok(q.sqrt())
}
