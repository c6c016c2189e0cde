//! Two-level additive preconditioners B r = P K_0^-1 P^T r + sum_i R_i^T
//! (local solve)_i R_i r, with three interchangeable local-solve strategies:
//! exact per-realization factorizations (direct), the frozen defect-free
//! factorization (nd), and the offline-online dictionary recombination (oo).
//! Variants are registered by name and selected at runtime.

pub mod coarse;
pub mod dictionary;
pub mod registry;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::coefficient::{CoefficientModel, Realization, WeightVector};
use crate::error::{Error, Result};
use crate::mesh::{assemble_local_dirichlet, FineCoefficientField, MeshHierarchy};
use crate::patches::{translation_map, Patch, ReferencePatch};
use crate::sparse::{CsrMatrix, SpdFactorization};

pub use coarse::{assemble_coarse_matrix, assemble_coarse_operator, CoarseMode};
pub use dictionary::{build_reference_dictionary, ReferenceDictionary};
pub use registry::{build_preconditioner, lookup, variants, VariantBuilder};

/// Whether the ND variant's coarse operator is frozen to the background
/// coefficient or rebuilt from the realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NdCoarseMode {
    Frozen,
    Exact,
}

impl FromStr for NdCoarseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen" => Ok(NdCoarseMode::Frozen),
            "exact" => Ok(NdCoarseMode::Exact),
            other => Err(Error::Config(format!(
                "unknown nd-coarse mode '{other}' (expected frozen|exact)"
            ))),
        }
    }
}

impl fmt::Display for NdCoarseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NdCoarseMode::Frozen => "frozen",
            NdCoarseMode::Exact => "exact",
        })
    }
}

/// Everything a variant builder needs for one realization.
pub struct BuildContext<'a> {
    pub model: &'a CoefficientModel,
    pub realization: &'a Realization,
    pub hier: &'a MeshHierarchy,
    /// Rasterized coefficient of this realization.
    pub field: &'a FineCoefficientField,
    pub patches: &'a [Patch],
    /// Shared offline dictionary; required by the nd and oo variants.
    pub dictionary: Option<Arc<ReferenceDictionary>>,
    pub nd_coarse: NdCoarseMode,
}

/// Patch-local solve strategy behind the additive preconditioner.
pub trait LocalSolve: Send + Sync {
    fn solve_local(&self, patch_idx: usize, r_local: &[f64]) -> Vec<f64>;
}

/// Ready-to-apply two-level preconditioner.
pub struct TwoLevelPrecond {
    variant: &'static str,
    dim: usize,
    coarse_factor: SpdFactorization,
    prolongation: CsrMatrix,
    patches: Vec<Patch>,
    local: Box<dyn LocalSolve>,
    patch_factorizations: usize,
}

impl TwoLevelPrecond {
    pub fn variant(&self) -> &'static str {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Patch factorizations performed while building this state (the coarse
    /// factorization is not counted).
    pub fn patch_factorizations(&self) -> usize {
        self.patch_factorizations
    }

    /// z = P K_0^-1 P^T r + sum_i R_i^T (local solve)_i R_i r, with patch
    /// contributions accumulated in ascending patch order.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: r.len(),
                context: "preconditioner operand",
            });
        }
        let coarse_rhs = self.prolongation.spmv_transpose(r)?;
        let coarse_sol = self.coarse_factor.solve(&coarse_rhs)?;
        let mut z = self.prolongation.spmv(&coarse_sol)?;
        let mut r_local = Vec::new();
        for (i, patch) in self.patches.iter().enumerate() {
            r_local.clear();
            r_local.extend(patch.fine_dofs().iter().map(|&d| r[d]));
            let z_local = self.local.solve_local(i, &r_local);
            for (&d, &v) in patch.fine_dofs().iter().zip(&z_local) {
                z[d] += v;
            }
        }
        Ok(z)
    }
}

/// Patch-local stiffness matrix K_i(A) on the patch interior DOFs with
/// homogeneous Dirichlet data on the patch boundary.
pub fn assemble_patch_matrix(
    field: &FineCoefficientField,
    patch: &Patch,
    hier: &MeshHierarchy,
) -> CsrMatrix {
    let side = 2 * hier.fine_per_coarse();
    let (x0, y0) = patch.offset();
    assemble_local_dirichlet(side, |cx, cy| {
        field.values()[hier.fine_cell_index(x0 + cx, y0 + cy)]
    })
}

/// Factorizes the exact local operator of one patch for the realization
/// coefficient.
pub fn build_direct_local(
    patch: &Patch,
    field: &FineCoefficientField,
    hier: &MeshHierarchy,
) -> Result<SpdFactorization> {
    SpdFactorization::new(&assemble_patch_matrix(field, patch, hier))
}

/// Applies the offline-online local operator: the mu-weighted combination
/// of translated reference solves, skipping zero weights. No factorization
/// is performed.
pub fn apply_local_oo(
    dict: &ReferenceDictionary,
    patch: &Patch,
    weights: &WeightVector,
    r_local: &[f64],
    hier: &MeshHierarchy,
) -> Result<Vec<f64>> {
    if weights.len() != dict.n_ref() + 1 {
        return Err(Error::DimensionMismatch {
            expected: dict.n_ref() + 1,
            found: weights.len(),
            context: "mu-weight vector",
        });
    }
    if r_local.len() != dict.patch_dim() {
        return Err(Error::DimensionMismatch {
            expected: dict.patch_dim(),
            found: r_local.len(),
            context: "patch-local residual",
        });
    }
    let reference = ReferencePatch::new(hier);
    let map = translation_map(patch, &reference, hier)?;
    let z_ref = combine_reference_solves(dict, weights, &gather(&map, r_local));
    Ok(scatter(&map, &z_ref))
}

fn gather(map: &[usize], r_local: &[f64]) -> Vec<f64> {
    map.iter().map(|&pos| r_local[pos]).collect()
}

fn scatter(map: &[usize], z_ref: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; z_ref.len()];
    for (k, &pos) in map.iter().enumerate() {
        z[pos] = z_ref[k];
    }
    z
}

fn combine_reference_solves(
    dict: &ReferenceDictionary,
    weights: &WeightVector,
    r_ref: &[f64],
) -> Vec<f64> {
    let mut z = vec![0.0; r_ref.len()];
    for (l, w) in weights.active() {
        let y = dict
            .patch_factor(l)
            .solve(r_ref)
            .expect("reference factor dimension matches the patch");
        for (zk, yk) in z.iter_mut().zip(&y) {
            *zk += w * yk;
        }
    }
    z
}

/// Exact per-patch factorizations (the Direct-DD local stage).
struct DirectLocal {
    factors: Vec<SpdFactorization>,
}

impl LocalSolve for DirectLocal {
    fn solve_local(&self, patch_idx: usize, r_local: &[f64]) -> Vec<f64> {
        self.factors[patch_idx]
            .solve(r_local)
            .expect("local dimensions fixed at build time")
    }
}

/// Single shared background factorization applied by translation (ND-DD).
struct FrozenLocal {
    dict: Arc<ReferenceDictionary>,
    maps: Vec<Vec<usize>>,
}

impl LocalSolve for FrozenLocal {
    fn solve_local(&self, patch_idx: usize, r_local: &[f64]) -> Vec<f64> {
        let map = &self.maps[patch_idx];
        let y = self
            .dict
            .patch_factor(0)
            .solve(&gather(map, r_local))
            .expect("local dimensions fixed at build time");
        scatter(map, &y)
    }
}

/// Dictionary recombination with per-patch mu-weights (OO-DD).
struct DictionaryLocal {
    dict: Arc<ReferenceDictionary>,
    maps: Vec<Vec<usize>>,
    weights: Vec<WeightVector>,
}

impl LocalSolve for DictionaryLocal {
    fn solve_local(&self, patch_idx: usize, r_local: &[f64]) -> Vec<f64> {
        let map = &self.maps[patch_idx];
        let z_ref = combine_reference_solves(
            &self.dict,
            &self.weights[patch_idx],
            &gather(map, r_local),
        );
        scatter(map, &z_ref)
    }
}
