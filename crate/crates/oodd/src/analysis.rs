//! Quantitative verification of the perturbation framework: spectra of the
//! preconditioned operators in the energy inner product, the perturbation
//! constant eta, the patch-local error indicator, operator-deviation
//! statistics, and the break-even cost model.

use crate::coefficient::{patch_weights, Realization};
use crate::error::{Error, Result};
use crate::mesh::{assemble_local_free, MeshHierarchy, Q1_STIFFNESS};
use crate::patches::Patch;
use crate::precond::ReferenceDictionary;
use crate::rng::SplitMix64;
use crate::sparse::dense::{
    dense_generalized_eigvals, sym_eigen, DenseMat, DenseSymmetricPencil, DENSE_EIG_LIMIT,
};
use crate::sparse::{dot, norm2, CsrMatrix};

/// Extreme generalized eigenvalues of a preconditioned operator in the
/// energy inner product.
#[derive(Clone, Copy, Debug)]
pub struct OperatorSpectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl OperatorSpectrum {
    pub fn is_positive(&self) -> bool {
        self.lambda_min > 0.0
    }

    /// Condition number, when the operator is positive definite.
    pub fn kappa(&self) -> Option<f64> {
        self.is_positive().then(|| self.lambda_max / self.lambda_min)
    }
}

/// Measured spectral data of an (exact, approximate) operator pair.
#[derive(Clone, Copy, Debug)]
pub struct SpectrumReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub eta: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
}

pub fn make_spectrum_report(
    exact: &OperatorSpectrum,
    tilde: &OperatorSpectrum,
    eta: f64,
) -> SpectrumReport {
    SpectrumReport {
        lambda_min: tilde.lambda_min,
        lambda_max: tilde.lambda_max,
        kappa: tilde.lambda_max / tilde.lambda_min,
        eta,
        c1_hat: exact.lambda_min,
        c2_hat: exact.lambda_max,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtaMode {
    /// Assemble the perturbation operator columnwise and solve the dense
    /// generalized eigenproblem (desk scale only).
    Dense,
    /// Power iteration in the energy inner product.
    Iterative,
}

fn csr_to_dense(k: &CsrMatrix) -> DenseMat {
    let n = k.nrows();
    let mut m = DenseMat::zeros(n, k.ncols());
    for i in 0..n {
        let (cols, vals) = k.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            m.set(i, j, v);
        }
    }
    m
}

/// Forms K M K columnwise, where M r is given by `apply`.
fn energy_sandwich(
    k: &CsrMatrix,
    apply: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<DenseMat> {
    let n = k.nrows();
    let mut out = DenseMat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let ke = k.spmv(&e)?;
        let me = apply(&ke)?;
        let col = k.spmv(&me)?;
        for i in 0..n {
            out.set(i, j, col[i]);
        }
        e[j] = 0.0;
    }
    Ok(out)
}

/// Perturbation constant: the spectral radius of (B~ - B) L in the energy
/// inner product, i.e. the largest |lambda| of K (B~ - B) K v = lambda K v.
pub fn estimate_eta(
    k: &CsrMatrix,
    apply_exact: impl Fn(&[f64]) -> Vec<f64>,
    apply_approx: impl Fn(&[f64]) -> Vec<f64>,
    mode: EtaMode,
) -> Result<f64> {
    let n = k.nrows();
    match mode {
        EtaMode::Dense => {
            if n > DENSE_EIG_LIMIT {
                return Err(Error::DenseScaleGuard {
                    n,
                    limit: DENSE_EIG_LIMIT,
                });
            }
            let mut m = energy_sandwich(k, |r| {
                let d: Vec<f64> = apply_approx(r)
                    .iter()
                    .zip(apply_exact(r))
                    .map(|(a, b)| a - b)
                    .collect();
                Ok(d)
            })?;
            let scale = m.max_abs().max(k.max_abs());
            if m.asymmetry() > 1e-8 * scale {
                return Err(Error::SymmetryViolation {
                    defect: m.asymmetry() / scale,
                });
            }
            m.symmetrize();
            let pencil = DenseSymmetricPencil::new(m, csr_to_dense(k))?;
            let vals = dense_generalized_eigvals(&pencil)?;
            Ok(vals
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs())))
        }
        EtaMode::Iterative => {
            let mut rng = SplitMix64::new(0x0e7a_0e7a);
            let mut v = rng.vector(n);
            let mut kv = k.spmv(&v)?;
            let nrm = dot(&v, &kv).max(0.0).sqrt();
            if nrm == 0.0 {
                return Ok(0.0);
            }
            v.iter_mut().for_each(|x| *x /= nrm);
            kv.iter_mut().for_each(|x| *x /= nrm);

            let mut lambda_prev = f64::INFINITY;
            let mut lambda = 0.0;
            for _ in 0..500 {
                // E v = (B~ - B)(K v); its K-Rayleigh quotient estimates the
                // dominant eigenvalue.
                let w: Vec<f64> = apply_approx(&kv)
                    .iter()
                    .zip(apply_exact(&kv))
                    .map(|(a, b)| a - b)
                    .collect();
                lambda = dot(&w, &kv);
                let kw = k.spmv(&w)?;
                let w_norm = dot(&w, &kw).max(0.0).sqrt();
                if w_norm <= 1e-150 {
                    return Ok(0.0);
                }
                v = w;
                v.iter_mut().for_each(|x| *x /= w_norm);
                kv = kw;
                kv.iter_mut().for_each(|x| *x /= w_norm);
                if (lambda - lambda_prev).abs() <= 1e-6 * lambda.abs() {
                    break;
                }
                lambda_prev = lambda;
            }
            Ok(lambda.abs())
        }
    }
}

/// Extreme eigenvalues of the preconditioned operator B L in the energy
/// inner product, via the dense pencil (K B K, K).
pub fn spectrum(
    k: &CsrMatrix,
    apply_b: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<OperatorSpectrum> {
    let n = k.nrows();
    if n > DENSE_EIG_LIMIT {
        return Err(Error::DenseScaleGuard {
            n,
            limit: DENSE_EIG_LIMIT,
        });
    }
    let mut m = energy_sandwich(k, |r| Ok(apply_b(r)))?;
    m.symmetrize();
    let pencil = DenseSymmetricPencil::new(m, csr_to_dense(k))?;
    let vals = dense_generalized_eigvals(&pencil)?;
    Ok(OperatorSpectrum {
        lambda_min: vals[0],
        lambda_max: vals[vals.len() - 1],
    })
}

/// Outcome of testing the perturbation containment: the approximate
/// spectrum must lie in [C1 - eta, C2 + eta], and when eta < C1 the
/// condition number is bounded by (C2 + eta) / (C1 - eta).
#[derive(Clone, Copy, Debug)]
pub struct StabilityCheck {
    /// eta < C1, so the condition-number bound applies.
    pub applicable: bool,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub kappa_bound: Option<f64>,
    pub kappa_bound_ok: Option<bool>,
}

impl StabilityCheck {
    pub fn passed(&self) -> bool {
        self.lower_ok && self.upper_ok && self.kappa_bound_ok.unwrap_or(true)
    }
}

const STABILITY_SLACK: f64 = 1e-9;

pub fn check_stability_bounds(
    exact: &OperatorSpectrum,
    tilde: &OperatorSpectrum,
    eta: f64,
) -> StabilityCheck {
    let lower_ok = tilde.lambda_min >= exact.lambda_min - eta - STABILITY_SLACK;
    let upper_ok = tilde.lambda_max <= exact.lambda_max + eta + STABILITY_SLACK;
    if eta < exact.lambda_min {
        let bound = (exact.lambda_max + eta) / (exact.lambda_min - eta);
        let kappa = tilde.lambda_max / tilde.lambda_min;
        StabilityCheck {
            applicable: true,
            lower_ok,
            upper_ok,
            kappa_bound: Some(bound),
            kappa_bound_ok: Some(
                tilde.is_positive() && kappa <= bound * (1.0 + STABILITY_SLACK) + STABILITY_SLACK,
            ),
        }
    } else {
        // Bound not applicable; containment is still reported.
        StabilityCheck {
            applicable: false,
            lower_ok,
            upper_ok,
            kappa_bound: None,
            kappa_bound_ok: None,
        }
    }
}

/// Desk-scale cap on the patch-local dense eigenproblem.
const PATCH_DENSE_LIMIT: usize = 2500;

/// Patch error indicator E_i: the square root of the largest generalized
/// Rayleigh quotient of the weighted-residual form against the local energy
/// form, assembled densely on the closed patch. E_i vanishes whenever the
/// patch holds at most one defect.
pub fn patch_error_indicator(
    dict: &ReferenceDictionary,
    patch: &Patch,
    realization: &Realization,
    hier: &MeshHierarchy,
) -> Result<f64> {
    let model = dict.model();
    let side = 2 * hier.fine_per_coarse();
    let nodes = side + 1;
    let resolution = hier.cell_resolution();
    let eps_side = 2 * hier.eps_per_coarse();
    let (x0, y0) = patch.offset();
    let n_fine = hier.n_fine();

    // Active local nodes: closed-patch nodes that are not on the global
    // Dirichlet boundary.
    let mut s_index = vec![usize::MAX; nodes * nodes];
    let mut n_active = 0usize;
    for ly in 0..nodes {
        for lx in 0..nodes {
            let gx = x0 + lx;
            let gy = y0 + ly;
            if gx >= 1 && gx < n_fine && gy >= 1 && gy < n_fine {
                s_index[ly * nodes + lx] = n_active;
                n_active += 1;
            }
        }
    }
    if n_active > PATCH_DENSE_LIMIT {
        return Err(Error::DenseScaleGuard {
            n: n_active,
            limit: PATCH_DENSE_LIMIT,
        });
    }

    // Realization coefficient of local cell (cx, cy).
    let realized = |cx: usize, cy: usize| -> f64 {
        let gx = x0 + cx;
        let gy = y0 + cy;
        model.cell_value(
            gx % resolution,
            gy % resolution,
            realization.is_defective(gx / resolution, gy / resolution),
        )
    };
    // Reference coefficient of configuration l at local cell (cx, cy).
    let reference = |l: usize, cx: usize, cy: usize| -> f64 {
        let q = (cy / resolution) * eps_side + cx / resolution;
        model.cell_value(cx % resolution, cy % resolution, l >= 1 && q == l - 1)
    };

    // Local energy form over the patch cells, restricted to active nodes.
    let free = assemble_local_free(side, realized);
    let mut d_s = DenseMat::zeros(n_active, n_active);
    for row in 0..nodes * nodes {
        let si = s_index[row];
        if si == usize::MAX {
            continue;
        }
        let (cols, vals) = free.row(row);
        for (&c, &v) in cols.iter().zip(vals) {
            let sj = s_index[c];
            if sj != usize::MAX {
                d_s.set(si, sj, v);
            }
        }
    }

    // Right-hand-side map onto the patch interior: rows of the free form at
    // interior nodes (their hats are supported inside the closed patch).
    let n_loc = dict.patch_dim();
    let interior_side = side - 1;
    let interior_of = |lx: usize, ly: usize| -> Option<usize> {
        if lx >= 1 && lx <= interior_side && ly >= 1 && ly <= interior_side {
            Some((ly - 1) * interior_side + (lx - 1))
        } else {
            None
        }
    };
    let mut b_int = DenseMat::zeros(n_loc, n_active);
    for ly in 0..nodes {
        for lx in 0..nodes {
            if let Some(j) = interior_of(lx, ly) {
                let (cols, vals) = free.row(ly * nodes + lx);
                for (&c, &v) in cols.iter().zip(vals) {
                    let sj = s_index[c];
                    if sj != usize::MAX {
                        b_int.add_to(j, sj, v);
                    }
                }
            }
        }
    }

    // Local Ritz responses u^(l) = (K^(l))^-1 B_int for each active weight.
    let weights = patch_weights(realization, patch, hier);
    let active: Vec<(usize, f64)> = weights.active().collect();
    let mut responses: Vec<(usize, f64, DenseMat)> = Vec::with_capacity(active.len());
    for &(l, w) in &active {
        let factor = dict.patch_factor(l);
        let mut sol = DenseMat::zeros(n_loc, n_active);
        let mut rhs = vec![0.0; n_loc];
        for s in 0..n_active {
            for j in 0..n_loc {
                rhs[j] = b_int.get(j, s);
            }
            let col = factor.solve(&rhs)?;
            for (j, &v) in col.iter().enumerate() {
                sol.set(j, s, v);
            }
        }
        responses.push((l, w, sol));
    }

    // Numerator form: sum over cells of (combined gradient)^T (combined
    // gradient) in L2, using the unit element stiffness as the per-cell
    // gradient Gram matrix.
    let mut numerator = DenseMat::zeros(n_active, n_active);
    let corner_offsets = [(0usize, 0usize), (1, 0), (0, 1), (1, 1)];
    let mut m_t = DenseMat::zeros(4, n_active);
    for cy in 0..side {
        for cx in 0..side {
            let a_cell = realized(cx, cy);
            let scale = 1.0 / a_cell.sqrt();
            let factors: Vec<f64> = active
                .iter()
                .map(|&(l, w)| w * (reference(l, cx, cy) - a_cell) * scale)
                .collect();
            if factors.iter().all(|&c| c == 0.0) {
                continue;
            }
            m_t.fill(0.0);
            for (m, (dx, dy)) in corner_offsets.iter().enumerate() {
                if let Some(j) = interior_of(cx + dx, cy + dy) {
                    for (idx, (_, _, sol)) in responses.iter().enumerate() {
                        let c = factors[idx];
                        if c == 0.0 {
                            continue;
                        }
                        for s in 0..n_active {
                            m_t.add_to(m, s, c * sol.get(j, s));
                        }
                    }
                }
            }
            // numerator += M_T^T K1 M_T
            let mut km = DenseMat::zeros(4, n_active);
            for m in 0..4 {
                for kk in 0..4 {
                    let w = Q1_STIFFNESS[m][kk];
                    if w == 0.0 {
                        continue;
                    }
                    for s in 0..n_active {
                        km.add_to(m, s, w * m_t.get(kk, s));
                    }
                }
            }
            for s1 in 0..n_active {
                for m in 0..4 {
                    let left = m_t.get(m, s1);
                    if left == 0.0 {
                        continue;
                    }
                    for s2 in 0..n_active {
                        numerator.add_to(s1, s2, left * km.get(m, s2));
                    }
                }
            }
        }
    }

    // Deflate the (near-)kernel of the local energy form and maximize the
    // generalized Rayleigh quotient on its positive subspace.
    let (d_vals, d_vecs) = sym_eigen(&d_s, true)?;
    let d_vecs = d_vecs.expect("eigenvectors requested");
    let d_max = d_vals.iter().fold(0.0f64, |m, v| m.max(*v));
    if d_max <= 0.0 {
        return Ok(0.0);
    }
    let keep: Vec<usize> = (0..n_active)
        .filter(|&i| d_vals[i] > 1e-12 * d_max)
        .collect();
    if keep.is_empty() {
        return Ok(0.0);
    }
    let m = keep.len();
    // C = S^-1/2 Q^T N Q S^-1/2 with S the kept eigenvalues.
    let mut nq = DenseMat::zeros(n_active, m);
    for (col, &ki) in keep.iter().enumerate() {
        for i in 0..n_active {
            let mut acc = 0.0;
            for j in 0..n_active {
                acc += numerator.get(i, j) * d_vecs.get(j, ki);
            }
            nq.set(i, col, acc);
        }
    }
    let mut c = DenseMat::zeros(m, m);
    for (row, &ki) in keep.iter().enumerate() {
        for col in 0..m {
            let mut acc = 0.0;
            for i in 0..n_active {
                acc += d_vecs.get(i, ki) * nq.get(i, col);
            }
            c.set(row, col, acc / (d_vals[ki].sqrt() * d_vals[keep[col]].sqrt()));
        }
    }
    c.symmetrize();
    let (c_vals, _) = sym_eigen(&c, false)?;
    Ok(c_vals[c_vals.len() - 1].max(0.0).sqrt())
}

/// RMSE over seeded random test vectors of the relative deviation
/// ||(B - B')r||_2 / ||B r||_2.
pub fn operator_deviation(
    apply_exact: impl Fn(&[f64]) -> Vec<f64>,
    apply_approx: impl Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    n_vectors: usize,
    seed: u64,
) -> Result<f64> {
    if n_vectors == 0 {
        return Err(Error::EmptyInput("operator deviation over zero vectors"));
    }
    let mut rng = SplitMix64::new(seed);
    let mut sum_sq = 0.0;
    for _ in 0..n_vectors {
        let r = rng.vector(dim);
        let exact = apply_exact(&r);
        let approx = apply_approx(&r);
        let denom = norm2(&exact);
        if denom == 0.0 {
            return Err(Error::DegenerateOperator);
        }
        let diff: f64 = exact
            .iter()
            .zip(&approx)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        sum_sq += (diff / denom) * (diff / denom);
    }
    Ok((sum_sq / n_vectors as f64).sqrt())
}

/// Representative costs and iteration counts for the break-even model.
#[derive(Clone, Copy, Debug)]
pub struct CostModel {
    pub t_patch: f64,
    pub t_comb: f64,
    pub t_pcg: f64,
    pub n_ref: usize,
    pub n_patches: usize,
    pub k_direct: f64,
    pub k_nd: f64,
    pub k_oo: f64,
}

/// Break-even Monte-Carlo sample counts of the offline-online method
/// against both baselines; `None` means the baseline is never overtaken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BreakEvenReport {
    pub vs_direct: Option<f64>,
    pub vs_nd: Option<f64>,
}

pub fn break_even(cm: &CostModel) -> Result<BreakEvenReport> {
    if cm.t_patch < 0.0
        || cm.t_comb < 0.0
        || cm.t_pcg < 0.0
        || cm.k_direct < 0.0
        || cm.k_nd < 0.0
        || cm.k_oo < 0.0
    {
        return Err(Error::Config("cost model entries must be nonnegative".to_string()));
    }
    if cm.n_ref < 1 {
        return Err(Error::Config("cost model requires n_ref >= 1".to_string()));
    }
    let np = cm.n_patches as f64;
    let ratio = |numerator: f64, denominator: f64| -> Option<f64> {
        if denominator > 0.0 {
            Some(numerator / denominator)
        } else if numerator == 0.0 {
            Some(0.0)
        } else {
            None
        }
    };
    let vs_direct = ratio(
        cm.n_ref as f64 * cm.t_patch,
        np * (cm.t_patch - cm.t_comb) + (cm.k_direct - cm.k_oo) * cm.t_pcg,
    );
    let vs_nd = ratio(
        (cm.n_ref as f64 - 1.0) * cm.t_patch,
        (cm.k_nd - cm.k_oo) * cm.t_pcg - np * cm.t_comb,
    );
    Ok(BreakEvenReport { vs_direct, vs_nd })
}
