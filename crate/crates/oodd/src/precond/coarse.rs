//! Exact offline-online assembly of the coarse operator K_0(A): each coarse
//! element is a lambda-weighted combination of reference element blocks.
//! Because element stiffness is linear in the coefficient and the weights
//! sum to one, the combination agrees with direct Galerkin assembly.

use crate::coefficient::{element_weights, rasterize, Realization};
use crate::error::Result;
use crate::mesh::{
    assemble_stiffness, galerkin_coarse, prolongation, MeshHierarchy, MeshLevel, CORNER_OFFSETS,
};
use crate::precond::dictionary::ReferenceDictionary;
use crate::sparse::{csr_from_triplets, CsrMatrix, SpdFactorization};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoarseMode {
    /// Lambda-weighted reference blocks (the offline-online route).
    Oo,
    /// Literal Galerkin product P^T K_fine(A) P.
    Direct,
}

/// Assembles the global coarse stiffness matrix for one realization.
pub fn assemble_coarse_matrix(
    dict: &ReferenceDictionary,
    realization: &Realization,
    hier: &MeshHierarchy,
    mode: CoarseMode,
) -> Result<CsrMatrix> {
    match mode {
        CoarseMode::Oo => {
            let nc = hier.n_coarse();
            let dofs = hier.coarse_dof_count();
            let mut triplets = Vec::with_capacity(16 * nc * nc);
            for ey in 0..nc {
                for ex in 0..nc {
                    let weights = element_weights(realization, (ex, ey), hier);
                    let mut block = [[0.0f64; 4]; 4];
                    for (l, w) in weights.active() {
                        let reference = dict.coarse_block(l);
                        for c1 in 0..4 {
                            for c2 in 0..4 {
                                block[c1][c2] += w * reference[c1][c2];
                            }
                        }
                    }
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
        CoarseMode::Direct => {
            let field = rasterize(dict.model(), realization, hier)?;
            let k_fine = assemble_stiffness(MeshLevel::Fine, &field, hier)?;
            let p = prolongation(hier);
            galerkin_coarse(&k_fine, &p)
        }
    }
}

/// Assembles and factorizes the coarse operator.
pub fn assemble_coarse_operator(
    dict: &ReferenceDictionary,
    realization: &Realization,
    hier: &MeshHierarchy,
    mode: CoarseMode,
) -> Result<SpdFactorization> {
    let k0 = assemble_coarse_matrix(dict, realization, hier, mode)?;
    SpdFactorization::new(&k0)
}

/// Incremental form of one coarse-element matrix:
/// K_0 block + sum over defect cells of (K_q block - K_0 block).
/// Algebraically identical to the lambda combination.
pub fn incremental_element_block(
    dict: &ReferenceDictionary,
    defect_cells: &[usize],
) -> [[f64; 4]; 4] {
    let mut block = *dict.coarse_block(0);
    let base = dict.coarse_block(0);
    for &q in defect_cells {
        let refq = dict.coarse_block(q);
        for c1 in 0..4 {
            for c2 in 0..4 {
                block[c1][c2] += refq[c1][c2] - base[c1][c2];
            }
        }
    }
    block
}
