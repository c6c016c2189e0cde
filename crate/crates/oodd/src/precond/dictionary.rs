//! Offline reference dictionary: factorized patch operators for the
//! defect-free background and every single-defect position, plus the
//! reference coarse-element stiffness blocks. Built once per
//! (mesh, geometry, contrast) and reused across realizations, either
//! in-process or through a binary cache file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::coefficient::{model_from_masks, CoefficientModel};
use crate::error::{Error, Result};
use crate::mesh::{coarse_element_block, MeshHierarchy};
use crate::patches::ReferencePatch;
use crate::sparse::{CsrMatrix, SpdFactorization};

/// Magic bytes of the dictionary cache file.
pub const CACHE_MAGIC: &[u8; 5] = b"OODD1";

/// Precomputed reference operators shared by the ND and OO variants.
pub struct ReferenceDictionary {
    model: CoefficientModel,
    h: f64,
    coarse_h: f64,
    patch_dim: usize,
    n_ref: usize,
    patch_factors: Vec<SpdFactorization>,
    n_ref_coarse: usize,
    coarse_blocks: Vec<[[f64; 4]; 4]>,
    factorizations_performed: usize,
}

impl ReferenceDictionary {
    /// Number of single-defect patch configurations (2H/eps)^2.
    pub fn n_ref(&self) -> usize {
        self.n_ref
    }

    /// Number of single-defect coarse-element configurations (H/eps)^2.
    pub fn n_ref_coarse(&self) -> usize {
        self.n_ref_coarse
    }

    /// Interior DOFs per patch, (2H/h - 1)^2.
    pub fn patch_dim(&self) -> usize {
        self.patch_dim
    }

    /// Factor of reference configuration `l` (0 = background).
    pub fn patch_factor(&self, l: usize) -> &SpdFactorization {
        &self.patch_factors[l]
    }

    /// Reference coarse-element block of configuration `l` (0 = background),
    /// a symmetric 4x4 matrix over the element corner hats.
    pub fn coarse_block(&self, l: usize) -> &[[f64; 4]; 4] {
        &self.coarse_blocks[l]
    }

    pub fn model(&self) -> &CoefficientModel {
        &self.model
    }

    /// Patch factorizations performed while building this dictionary
    /// (zero when it was loaded from a cache file).
    pub fn factorizations_performed(&self) -> usize {
        self.factorizations_performed
    }

    /// Whether this dictionary was built for the given model and hierarchy.
    pub fn matches(&self, model: &CoefficientModel, hier: &MeshHierarchy) -> bool {
        (self.h - hier.h()).abs() <= 1e-12
            && (self.coarse_h - hier.coarse_h()).abs() <= 1e-12
            && (self.model.eps() - model.eps()).abs() <= 1e-12
            && self.model.cell_resolution() == model.cell_resolution()
            && self.model.alpha() == model.alpha()
            && self.model.beta() == model.beta()
            && self.model.background_mask() == model.background_mask()
            && self.model.defect_mask() == model.defect_mask()
    }
}

/// Coefficient of local fine cell (cx, cy) of the reference patch under
/// configuration `l`: 0 is the defect-free background, l >= 1 places one
/// defect at local eps-cell l-1 (row-major).
pub fn reference_patch_coefficient(
    model: &CoefficientModel,
    reference: &ReferencePatch,
    config: usize,
    cx: usize,
    cy: usize,
) -> f64 {
    let resolution = reference.cell_resolution();
    let q = reference.eps_cell_of(cx, cy);
    let defective = config >= 1 && q == config - 1;
    model.cell_value(cx % resolution, cy % resolution, defective)
}

/// Assembles the reference patch stiffness matrix for configuration `l`
/// (homogeneous Dirichlet on the patch boundary).
pub fn assemble_reference_patch_matrix(
    model: &CoefficientModel,
    hier: &MeshHierarchy,
    config: usize,
) -> CsrMatrix {
    let reference = ReferencePatch::new(hier);
    crate::mesh::assemble_local_dirichlet(reference.cell_side(), |cx, cy| {
        reference_patch_coefficient(model, &reference, config, cx, cy)
    })
}

/// Assembles the reference coarse-element block for configuration `l` over
/// the (H/eps)^2 eps-cells of one coarse element.
pub fn assemble_reference_coarse_block(
    model: &CoefficientModel,
    hier: &MeshHierarchy,
    config: usize,
) -> [[f64; 4]; 4] {
    let r = hier.fine_per_coarse();
    let resolution = hier.cell_resolution();
    let eps_side = hier.eps_per_coarse();
    coarse_element_block(r, |cx, cy| {
        let q = (cy / resolution) * eps_side + cx / resolution;
        let defective = config >= 1 && q == config - 1;
        model.cell_value(cx % resolution, cy % resolution, defective)
    })
}

/// Runs the offline phase: assembles and factorizes the N_ref + 1 reference
/// patch operators and the coarse-element dictionary.
pub fn build_reference_dictionary(
    model: &CoefficientModel,
    hier: &MeshHierarchy,
) -> Result<ReferenceDictionary> {
    if (model.eps() - hier.eps()).abs() > 1e-12
        || model.cell_resolution() != hier.cell_resolution()
    {
        return Err(Error::Config(format!(
            "model eps/resolution ({}, {}) inconsistent with hierarchy ({}, {})",
            model.eps(),
            model.cell_resolution(),
            hier.eps(),
            hier.cell_resolution()
        )));
    }
    let reference = ReferencePatch::new(hier);
    let n_ref = reference.n_ref();
    let patch_factors: Vec<SpdFactorization> = (0..=n_ref)
        .into_par_iter()
        .map(|l| SpdFactorization::new(&assemble_reference_patch_matrix(model, hier, l)))
        .collect::<Result<_>>()?;

    let n_ref_coarse = hier.eps_per_coarse() * hier.eps_per_coarse();
    let coarse_blocks: Vec<[[f64; 4]; 4]> = (0..=n_ref_coarse)
        .map(|l| assemble_reference_coarse_block(model, hier, l))
        .collect();

    Ok(ReferenceDictionary {
        model: model.clone(),
        h: hier.h(),
        coarse_h: hier.coarse_h(),
        patch_dim: reference.n_local(),
        n_ref,
        patch_factors,
        n_ref_coarse,
        coarse_blocks,
        factorizations_performed: n_ref + 1,
    })
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

impl ReferenceDictionary {
    /// Serializes the dictionary to the binary cache format: the magic
    /// bytes, the (h, H, eps, geometry, alpha, beta) key, the masks, and
    /// the factor payloads.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            w.write_all(CACHE_MAGIC)?;
            write_f64(&mut w, self.h)?;
            write_f64(&mut w, self.coarse_h)?;
            write_f64(&mut w, self.model.eps())?;
            let tag = self.model.geometry().to_string();
            write_u64(&mut w, tag.len() as u64)?;
            w.write_all(tag.as_bytes())?;
            write_f64(&mut w, self.model.alpha())?;
            write_f64(&mut w, self.model.beta())?;
            write_u64(&mut w, self.model.cell_resolution() as u64)?;
            for mask in [self.model.background_mask(), self.model.defect_mask()] {
                for &b in mask {
                    w.write_all(&[b as u8])?;
                }
            }
            write_u64(&mut w, self.patch_dim as u64)?;
            write_u64(&mut w, self.n_ref as u64)?;
            write_u64(&mut w, self.n_ref_coarse as u64)?;
            for factor in &self.patch_factors {
                let (col_ptr, row_idx, values, diag) = factor.raw_parts();
                write_u64(&mut w, factor.dimension() as u64)?;
                write_u64(&mut w, row_idx.len() as u64)?;
                for &v in col_ptr {
                    write_u64(&mut w, v as u64)?;
                }
                for &v in row_idx {
                    write_u64(&mut w, v as u64)?;
                }
                for &v in values {
                    write_f64(&mut w, v)?;
                }
                for &v in diag {
                    write_f64(&mut w, v)?;
                }
            }
            for block in &self.coarse_blocks {
                for row in block {
                    for &v in row {
                        write_f64(&mut w, v)?;
                    }
                }
            }
            w.flush()
        })()
        .map_err(|e| io_err(path, e))
    }

    /// Loads a dictionary from the cache format written by [`save`](Self::save).
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Config(format!(
                "{} is not a dictionary cache (bad magic)",
                path.display()
            )));
        }
        (|| -> std::io::Result<Self> {
            let h = read_f64(&mut r)?;
            let coarse_h = read_f64(&mut r)?;
            let eps = read_f64(&mut r)?;
            let tag_len = read_u64(&mut r)? as usize;
            let mut tag_bytes = vec![0u8; tag_len];
            r.read_exact(&mut tag_bytes)?;
            let alpha = read_f64(&mut r)?;
            let beta = read_f64(&mut r)?;
            let resolution = read_u64(&mut r)? as usize;
            let read_mask = |r: &mut BufReader<File>| -> std::io::Result<Vec<bool>> {
                let mut bytes = vec![0u8; resolution * resolution];
                r.read_exact(&mut bytes)?;
                Ok(bytes.into_iter().map(|b| b != 0).collect())
            };
            let background = read_mask(&mut r)?;
            let defect = read_mask(&mut r)?;
            let patch_dim = read_u64(&mut r)? as usize;
            let n_ref = read_u64(&mut r)? as usize;
            let n_ref_coarse = read_u64(&mut r)? as usize;

            let mut patch_factors = Vec::with_capacity(n_ref + 1);
            for _ in 0..=n_ref {
                let n = read_u64(&mut r)? as usize;
                let nnz = read_u64(&mut r)? as usize;
                let mut col_ptr = Vec::with_capacity(n + 1);
                for _ in 0..=n {
                    col_ptr.push(read_u64(&mut r)? as usize);
                }
                let mut row_idx = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    row_idx.push(read_u64(&mut r)? as usize);
                }
                let mut values = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    values.push(read_f64(&mut r)?);
                }
                let mut diag = Vec::with_capacity(n);
                for _ in 0..n {
                    diag.push(read_f64(&mut r)?);
                }
                let factor = SpdFactorization::from_raw_parts(n, col_ptr, row_idx, values, diag)
                    .map_err(|_| {
                        std::io::Error::new(
                            std::io::ErrorKind::InvalidData,
                            "corrupt factor payload",
                        )
                    })?;
                patch_factors.push(factor);
            }
            let mut coarse_blocks = Vec::with_capacity(n_ref_coarse + 1);
            for _ in 0..=n_ref_coarse {
                let mut block = [[0.0; 4]; 4];
                for row in &mut block {
                    for v in row.iter_mut() {
                        *v = read_f64(&mut r)?;
                    }
                }
                coarse_blocks.push(block);
            }

            let model = model_from_masks(background, defect, alpha, beta, eps, resolution)
                .map_err(|e| {
                    std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
                })?;
            Ok(ReferenceDictionary {
                model,
                h,
                coarse_h,
                patch_dim,
                n_ref,
                patch_factors,
                n_ref_coarse,
                coarse_blocks,
                factorizations_performed: 0,
            })
        })()
        .map_err(|e| io_err(path, e))
    }
}
