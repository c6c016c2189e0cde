//! Left-preconditioned conjugate gradients with residual and energy-error
//! tracking, plus the classical condition-number convergence bound.

use crate::error::{Error, Result};
use crate::mesh::energy_norm;
use crate::sparse::{dot, norm2, CsrMatrix};

/// Per-solve convergence record. `residual_history` holds iteration 0
/// onward, so its length is `iterations + 1`; the optional energy-error
/// history is aligned with it.
#[derive(Clone, Debug)]
pub struct PcgReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub energy_error_history: Option<Vec<f64>>,
    pub final_x: Vec<f64>,
}

/// Treatment of a nonpositive preconditioned inner product `<z, r>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndefinitePolicy {
    /// Abort with an indefinite-preconditioner error. A nonpositive
    /// product signals that the perturbation has outgrown the stability
    /// bound (the eta >= C1 regime).
    Error,
    /// Keep iterating as long as the product is nonzero, matching the
    /// behavior of common CG implementations that run without positivity
    /// checks; only an exact breakdown aborts.
    Continue,
}

/// Solves K x = b by PCG with the preconditioner supplied as an apply
/// callback. Stops when the unpreconditioned residual two-norm falls below
/// `tol * ||b||`, or after `maxit` iterations. A nonpositive `<z, r>`
/// aborts the solve.
pub fn pcg(
    k: &CsrMatrix,
    b: &[f64],
    precond: impl Fn(&[f64]) -> Vec<f64>,
    tol: f64,
    maxit: usize,
    x0: Option<&[f64]>,
    reference: Option<&[f64]>,
) -> Result<PcgReport> {
    pcg_with_policy(
        k,
        b,
        precond,
        tol,
        maxit,
        x0,
        reference,
        IndefinitePolicy::Error,
    )
}

/// [`pcg`] with an explicit indefiniteness policy.
#[allow(clippy::too_many_arguments)]
pub fn pcg_with_policy(
    k: &CsrMatrix,
    b: &[f64],
    precond: impl Fn(&[f64]) -> Vec<f64>,
    tol: f64,
    maxit: usize,
    x0: Option<&[f64]>,
    reference: Option<&[f64]>,
    policy: IndefinitePolicy,
) -> Result<PcgReport> {
    let n = k.nrows();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
            context: "pcg right-hand side",
        });
    }
    let mut x = match x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: x0.len(),
                    context: "pcg initial iterate",
                });
            }
            x0.to_vec()
        }
        None => vec![0.0; n],
    };

    let mut energy_history = reference.map(|_| Vec::new());
    let record_energy = |x: &[f64], hist: &mut Option<Vec<f64>>| -> Result<()> {
        if let (Some(u), Some(hist)) = (reference, hist.as_mut()) {
            let diff: Vec<f64> = u.iter().zip(x).map(|(a, b)| a - b).collect();
            hist.push(energy_norm(k, &diff)?);
        }
        Ok(())
    };

    let b_norm = norm2(b);
    let threshold = tol * b_norm;
    let kx = k.spmv(&x)?;
    let mut r: Vec<f64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
    let mut res_norm = norm2(&r);
    let mut residual_history = vec![res_norm];
    record_energy(&x, &mut energy_history)?;

    if !res_norm.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    if res_norm <= threshold {
        return Ok(PcgReport {
            converged: true,
            iterations: 0,
            residual_history,
            energy_error_history: energy_history,
            final_x: x,
        });
    }

    let check_rz = |rz: f64, iteration: usize| -> Result<()> {
        if !rz.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        let bad = match policy {
            IndefinitePolicy::Error => rz <= 0.0,
            IndefinitePolicy::Continue => rz == 0.0,
        };
        if bad {
            return Err(Error::IndefinitePreconditioner { iteration });
        }
        Ok(())
    };

    let mut z = precond(&r);
    let mut rz = dot(&r, &z);
    check_rz(rz, 0)?;
    let mut p = z.clone();

    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=maxit {
        let kp = k.spmv(&p)?;
        let pkp = dot(&p, &kp);
        if !pkp.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        if pkp <= 0.0 {
            return Err(Error::SpdViolation {
                index: iter,
                pivot: pkp,
            });
        }
        let alpha = rz / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        res_norm = norm2(&r);
        if !res_norm.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        residual_history.push(res_norm);
        record_energy(&x, &mut energy_history)?;
        iterations = iter;
        if res_norm <= threshold {
            converged = true;
            break;
        }
        z = precond(&r);
        let rz_next = dot(&r, &z);
        check_rz(rz_next, iter)?;
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Ok(PcgReport {
        converged,
        iterations,
        residual_history,
        energy_error_history: energy_history,
        final_x: x,
    })
}

/// The classical PCG error-factor bound 2 ((sqrt(k)-1)/(sqrt(k)+1))^k for a
/// preconditioned operator with condition number `kappa`.
pub fn theoretical_bound(kappa: f64, iterations: usize) -> Result<f64> {
    if !(kappa >= 1.0) {
        return Err(Error::Config(format!(
            "condition number {kappa} must be >= 1"
        )));
    }
    let rho = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    Ok(2.0 * rho.powi(iterations as i32))
}

/// Root-mean-square energy error across solves, per iteration. Histories
/// shorter than the longest are padded by holding their final value, so
/// curves extend past individual convergence points.
pub fn rmse_energy_curves(reports: &[PcgReport]) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("rmse over zero reports"));
    }
    let histories: Vec<&[f64]> = reports
        .iter()
        .map(|r| {
            r.energy_error_history
                .as_deref()
                .ok_or(Error::EmptyInput("report without energy-error history"))
        })
        .collect::<Result<_>>()?;
    if histories.iter().any(|h| h.is_empty()) {
        return Err(Error::EmptyInput("empty energy-error history"));
    }
    let len = histories.iter().map(|h| h.len()).max().unwrap();
    let mut rmse = Vec::with_capacity(len);
    for k in 0..len {
        let mut sum_sq = 0.0;
        for h in &histories {
            let e = if k < h.len() { h[k] } else { *h.last().unwrap() };
            sum_sq += e * e;
        }
        rmse.push((sum_sq / histories.len() as f64).sqrt());
    }
    Ok(rmse)
}
