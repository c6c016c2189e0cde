//! Vertex-centered overlapping patches: one per interior coarse vertex,
//! spanning the 2x2 block of coarse elements sharing that vertex. All
//! patches are congruent translates of a single reference patch; with the
//! lexicographic DOF numbering the translation is a pure index offset.

use crate::error::Result;
use crate::mesh::MeshHierarchy;

/// One vertex patch: the open square of side 2H centered at an interior
/// coarse vertex, with its strictly interior fine DOFs.
#[derive(Clone, Debug)]
pub struct Patch {
    coarse_vertex: (usize, usize),
    cell_span: (usize, usize),
    fine_dofs: Vec<usize>,
    offset: (usize, usize),
}

impl Patch {
    pub fn coarse_vertex(&self) -> (usize, usize) {
        self.coarse_vertex
    }

    /// Lower-left coarse cell of the 2x2 block forming the patch.
    pub fn cell_span(&self) -> (usize, usize) {
        self.cell_span
    }

    /// Ascending global fine DOFs strictly inside the patch.
    pub fn fine_dofs(&self) -> &[usize] {
        &self.fine_dofs
    }

    /// Translation from the reference patch, in fine-node units.
    pub fn offset(&self) -> (usize, usize) {
        self.offset
    }

    pub fn n_local(&self) -> usize {
        self.fine_dofs.len()
    }

    /// Lower-left eps-cell of the patch footprint.
    pub fn eps_origin(&self, hier: &MeshHierarchy) -> (usize, usize) {
        let epc = hier.eps_per_coarse();
        (
            (self.coarse_vertex.0 - 1) * epc,
            (self.coarse_vertex.1 - 1) * epc,
        )
    }
}

/// Geometry of the shared reference patch.
#[derive(Clone, Copy, Debug)]
pub struct ReferencePatch {
    node_side: usize,
    eps_side: usize,
    cell_resolution: usize,
}

impl ReferencePatch {
    pub fn new(hier: &MeshHierarchy) -> Self {
        ReferencePatch {
            node_side: 2 * hier.fine_per_coarse() - 1,
            eps_side: 2 * hier.eps_per_coarse(),
            cell_resolution: hier.cell_resolution(),
        }
    }

    /// Interior local nodes per side (2H/h - 1).
    pub fn node_side(&self) -> usize {
        self.node_side
    }

    /// eps-cells per side (2H/eps).
    pub fn eps_side(&self) -> usize {
        self.eps_side
    }

    /// Fine cells per eps-cell side.
    pub fn cell_resolution(&self) -> usize {
        self.cell_resolution
    }

    /// Fine cells per side (2H/h).
    pub fn cell_side(&self) -> usize {
        self.node_side + 1
    }

    /// Number of single-defect reference positions.
    pub fn n_ref(&self) -> usize {
        self.eps_side * self.eps_side
    }

    pub fn n_local(&self) -> usize {
        self.node_side * self.node_side
    }

    /// Local eps-cell of local fine cell (cx, cy).
    pub fn eps_cell_of(&self, cx: usize, cy: usize) -> usize {
        (cy / self.cell_resolution) * self.eps_side + cx / self.cell_resolution
    }
}

/// One patch per interior coarse vertex, row-major by vertex.
pub fn build_patches(hier: &MeshHierarchy) -> Vec<Patch> {
    let nc = hier.n_coarse();
    let r = hier.fine_per_coarse();
    let mut patches = Vec::with_capacity((nc - 1) * (nc - 1));
    for vy in 1..nc {
        for vx in 1..nc {
            let x0 = (vx - 1) * r;
            let y0 = (vy - 1) * r;
            let mut fine_dofs = Vec::with_capacity((2 * r - 1) * (2 * r - 1));
            for iy in (y0 + 1)..(y0 + 2 * r) {
                for ix in (x0 + 1)..(x0 + 2 * r) {
                    fine_dofs.push(hier.fine_dof(ix, iy).expect("patch nodes are interior"));
                }
            }
            patches.push(Patch {
                coarse_vertex: (vx, vy),
                cell_span: (vx - 1, vy - 1),
                fine_dofs,
                offset: (x0, y0),
            });
        }
    }
    patches
}

/// The restriction index set R_i: global fine DOFs of the patch, ascending.
pub fn restriction_indices(patch: &Patch) -> &[usize] {
    patch.fine_dofs()
}

/// Bijection local-reference-index -> position within `patch.fine_dofs()`
/// realizing the translation T_i. For the lexicographic numbering this is
/// the identity, but callers must not rely on that.
pub fn translation_map(
    patch: &Patch,
    reference: &ReferencePatch,
    hier: &MeshHierarchy,
) -> Result<Vec<usize>> {
    let side = reference.node_side();
    let (x0, y0) = patch.offset();
    let mut map = Vec::with_capacity(side * side);
    for ly in 0..side {
        for lx in 0..side {
            let dof = hier
                .fine_dof(x0 + 1 + lx, y0 + 1 + ly)
                .expect("patch nodes are interior");
            let pos = patch
                .fine_dofs()
                .binary_search(&dof)
                .expect("node belongs to the patch");
            map.push(pos);
        }
    }
    Ok(map)
}
