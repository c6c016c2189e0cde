//! Periodic background coefficient with localized random defects.
//!
//! An eps-cell carries one of two inclusion masks: the background mask when
//! the cell is intact, the defect mask when its Bernoulli draw activates.
//! Masked fine cells take the value beta, all others alpha. Three built-in
//! defect geometries are provided; custom masks load from a text file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::{FineCoefficientField, MeshHierarchy};
use crate::patches::Patch;
use crate::rng::output_at;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Geometry {
    /// A defect erases the centered square inclusion.
    Erasure,
    /// A defect replaces the centered square by an L of two bars.
    LShape,
    /// A defect shifts the centered square toward the upper-right corner.
    Shifted,
    /// Masks supplied by the caller.
    Custom,
}

impl FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erasure" => Ok(Geometry::Erasure),
            "lshape" => Ok(Geometry::LShape),
            "shifted" => Ok(Geometry::Shifted),
            "custom" => Ok(Geometry::Custom),
            other => Err(Error::Config(format!(
                "unknown geometry '{other}' (expected erasure|lshape|shifted|custom)"
            ))),
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Geometry::Erasure => "erasure",
            Geometry::LShape => "lshape",
            Geometry::Shifted => "shifted",
            Geometry::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Background/defect inclusion masks for one eps-cell, plus the ellipticity
/// bounds. Every eps-cell of the domain reuses the same masks (periodicity).
#[derive(Clone, Debug)]
pub struct CoefficientModel {
    alpha: f64,
    beta: f64,
    eps: f64,
    cell_resolution: usize,
    background_mask: Vec<bool>,
    defect_mask: Vec<bool>,
    geometry: Geometry,
}

impl CoefficientModel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Fine cells per eps-cell side.
    pub fn cell_resolution(&self) -> usize {
        self.cell_resolution
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Row-major mask of beta-valued fine cells in an intact eps-cell.
    pub fn background_mask(&self) -> &[bool] {
        &self.background_mask
    }

    /// Row-major mask of beta-valued fine cells in a defective eps-cell.
    pub fn defect_mask(&self) -> &[bool] {
        &self.defect_mask
    }

    /// Coefficient of local fine cell (lx, ly) within an eps-cell.
    #[inline]
    pub fn cell_value(&self, lx: usize, ly: usize, defective: bool) -> f64 {
        let mask = if defective {
            &self.defect_mask
        } else {
            &self.background_mask
        };
        if mask[ly * self.cell_resolution + lx] {
            self.beta
        } else {
            self.alpha
        }
    }

    fn check_against(&self, hier: &MeshHierarchy) -> Result<()> {
        if (self.eps - hier.eps()).abs() > 1e-12 || self.cell_resolution != hier.cell_resolution()
        {
            return Err(Error::Config(format!(
                "model (eps = {}, resolution = {}) inconsistent with hierarchy (eps = {}, resolution = {})",
                self.eps,
                self.cell_resolution,
                hier.eps(),
                hier.cell_resolution()
            )));
        }
        Ok(())
    }
}

fn square_mask(resolution: usize, x0: usize, y0: usize, w: usize, h: usize) -> Vec<bool> {
    let mut mask = vec![false; resolution * resolution];
    for y in y0..(y0 + h) {
        for x in x0..(x0 + w) {
            mask[y * resolution + x] = true;
        }
    }
    mask
}

/// Builds one of the built-in defect models. The background inclusion is the
/// centered square of side eps/2 for all three geometries.
pub fn build_model(
    geometry: Geometry,
    alpha: f64,
    beta: f64,
    eps: f64,
    cell_resolution: usize,
) -> Result<CoefficientModel> {
    if !(alpha > 0.0) || beta < alpha {
        return Err(Error::Config(format!(
            "require 0 < alpha <= beta, got alpha = {alpha}, beta = {beta}"
        )));
    }
    if cell_resolution < 4 || !cell_resolution.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "cell resolution {cell_resolution} too small (need >= 4 and even)"
        )));
    }
    let r = cell_resolution;
    if geometry != Geometry::Custom && !r.is_multiple_of(4) {
        return Err(Error::Config(format!(
            "cell resolution {r} cannot place eps/4-aligned inclusions (need a multiple of 4)"
        )));
    }
    let background = square_mask(r, r / 4, r / 4, r / 2, r / 2);
    let defect = match geometry {
        Geometry::Erasure => vec![false; r * r],
        Geometry::LShape => {
            // Vertical bar eps/4 x 3eps/4 and horizontal bar 3eps/4 x eps/4,
            // joined at the lower-left quarter corner of the cell.
            let mut mask = square_mask(r, r / 4, r / 4, r / 4, 3 * r / 4);
            for (i, m) in square_mask(r, r / 4, r / 4, 3 * r / 4, r / 4)
                .into_iter()
                .enumerate()
            {
                mask[i] = mask[i] || m;
            }
            mask
        }
        Geometry::Shifted => square_mask(r, r / 2, r / 2, r / 2, r / 2),
        Geometry::Custom => {
            return Err(Error::Config(
                "custom geometry requires masks from a file; use model_from_masks".to_string(),
            ))
        }
    };
    Ok(CoefficientModel {
        alpha,
        beta,
        eps,
        cell_resolution,
        background_mask: background,
        defect_mask: defect,
        geometry,
    })
}

/// Builds a custom model from explicit masks (row-major, length
/// resolution^2 each).
pub fn model_from_masks(
    background: Vec<bool>,
    defect: Vec<bool>,
    alpha: f64,
    beta: f64,
    eps: f64,
    cell_resolution: usize,
) -> Result<CoefficientModel> {
    if !(alpha > 0.0) || beta < alpha {
        return Err(Error::Config(format!(
            "require 0 < alpha <= beta, got alpha = {alpha}, beta = {beta}"
        )));
    }
    if cell_resolution < 4 || !cell_resolution.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "cell resolution {cell_resolution} too small (need >= 4 and even)"
        )));
    }
    let want = cell_resolution * cell_resolution;
    if background.len() != want || defect.len() != want {
        return Err(Error::Config(format!(
            "mask length mismatch: expected {want}, got {} and {}",
            background.len(),
            defect.len()
        )));
    }
    Ok(CoefficientModel {
        alpha,
        beta,
        eps,
        cell_resolution,
        background_mask: background,
        defect_mask: defect,
        geometry: Geometry::Custom,
    })
}

/// Loads custom masks from a plain-text file: first line the resolution,
/// then `resolution` rows of 0/1 characters for the background mask (top row
/// first), a blank line, and the same for the defect mask.
pub fn load_mask_file(path: &Path) -> Result<(usize, Vec<bool>, Vec<bool>)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines();
    let resolution: usize = lines
        .next()
        .ok_or_else(|| Error::Config("mask file is empty".to_string()))?
        .trim()
        .parse()
        .map_err(|_| Error::Config("mask file must start with the resolution".to_string()))?;

    fn read_mask(
        lines: &mut std::str::Lines<'_>,
        resolution: usize,
        what: &str,
    ) -> Result<Vec<bool>> {
        let mut mask = vec![false; resolution * resolution];
        for row in 0..resolution {
            let line = lines
                .next()
                .ok_or_else(|| Error::Config(format!("{what} mask truncated at row {row}")))?
                .trim();
            if line.len() != resolution {
                return Err(Error::Config(format!(
                    "{what} mask row {row} has {} characters, expected {resolution}",
                    line.len()
                )));
            }
            let ly = resolution - 1 - row; // file rows are top-down
            for (lx, ch) in line.chars().enumerate() {
                mask[ly * resolution + lx] = match ch {
                    '0' => false,
                    '1' => true,
                    other => {
                        return Err(Error::Config(format!(
                            "{what} mask row {row} has invalid character '{other}'"
                        )))
                    }
                };
            }
        }
        Ok(mask)
    }

    let background = read_mask(&mut lines, resolution, "background")?;
    match lines.next() {
        Some(sep) if sep.trim().is_empty() => {}
        _ => {
            return Err(Error::Config(
                "expected a blank line between the masks".to_string(),
            ))
        }
    }
    let defect = read_mask(&mut lines, resolution, "defect")?;
    Ok((resolution, background, defect))
}

/// Bernoulli defect bitmap over the eps-cell grid, reproducible from
/// (p, seed) alone: cell i is defective iff SplitMix64 output i of the
/// stream seeded with `seed` falls below p * 2^64.
#[derive(Clone, Debug)]
pub struct Realization {
    p: f64,
    seed: u64,
    grid_side: usize,
    defect_bits: Vec<bool>,
}

impl Realization {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn defect_bits(&self) -> &[bool] {
        &self.defect_bits
    }

    #[inline]
    pub fn is_defective(&self, cx: usize, cy: usize) -> bool {
        self.defect_bits[cy * self.grid_side + cx]
    }

    pub fn n_defects(&self) -> usize {
        self.defect_bits.iter().filter(|b| **b).count()
    }

    /// Builds a realization from an explicit defect list; test helper for
    /// prescribed configurations.
    pub fn from_defects(grid_side: usize, defects: &[(usize, usize)]) -> Self {
        let mut defect_bits = vec![false; grid_side * grid_side];
        for &(cx, cy) in defects {
            defect_bits[cy * grid_side + cx] = true;
        }
        Realization {
            p: f64::NAN,
            seed: 0,
            grid_side,
            defect_bits,
        }
    }
}

/// Draws the defect bitmap for one realization of the coefficient.
pub fn sample_realization(
    model: &CoefficientModel,
    hier: &MeshHierarchy,
    p: f64,
    seed: u64,
) -> Result<Realization> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("probability p = {p} outside [0, 1]")));
    }
    model.check_against(hier)?;
    let side = hier.n_cells_eps();
    let n = side * side;
    let defect_bits: Vec<bool> = if p <= 0.0 {
        vec![false; n]
    } else if p >= 1.0 {
        vec![true; n]
    } else {
        let threshold = (p * 2f64.powi(64)) as u128;
        (0..n)
            .map(|i| (output_at(seed, i as u64) as u128) < threshold)
            .collect()
    };
    Ok(Realization {
        p,
        seed,
        grid_side: side,
        defect_bits,
    })
}

/// Expands model and realization into the per-fine-cell coefficient field.
pub fn rasterize(
    model: &CoefficientModel,
    realization: &Realization,
    hier: &MeshHierarchy,
) -> Result<FineCoefficientField> {
    model.check_against(hier)?;
    if realization.grid_side() != hier.n_cells_eps() {
        return Err(Error::Config(format!(
            "realization grid {} does not match hierarchy eps grid {}",
            realization.grid_side(),
            hier.n_cells_eps()
        )));
    }
    let n = hier.n_fine();
    let resolution = hier.cell_resolution();
    let mut values = vec![0.0; n * n];
    for cy in 0..n {
        let ecy = cy / resolution;
        let ly = cy % resolution;
        for cx in 0..n {
            let ecx = cx / resolution;
            let lx = cx % resolution;
            values[hier.fine_cell_index(cx, cy)] =
                model.cell_value(lx, ly, realization.is_defective(ecx, ecy));
        }
    }
    FineCoefficientField::new(values, model.alpha(), model.beta())
}

/// Sum-to-one combination weights over the reference configurations:
/// index 0 is the background, index l >= 1 the single defect at local
/// position l-1 (row-major). The background weight is 1 - n_defects, so the
/// weights always sum to one exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
    n_defects: usize,
}

impl WeightVector {
    /// Defect-free weights (1, 0, ..., 0) over `n_ref` reference positions.
    pub fn background(n_ref: usize) -> Self {
        let mut weights = vec![0.0; n_ref + 1];
        weights[0] = 1.0;
        WeightVector {
            weights,
            n_defects: 0,
        }
    }

    fn from_defect_flags(flags: impl Iterator<Item = bool>) -> Self {
        let mut weights = vec![0.0f64];
        let mut n_defects = 0usize;
        for defective in flags {
            if defective {
                weights.push(1.0);
                n_defects += 1;
            } else {
                weights.push(0.0);
            }
        }
        weights[0] = 1.0 - n_defects as f64;
        WeightVector { weights, n_defects }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn n_defects(&self) -> usize {
        self.n_defects
    }

    /// Reference indices with nonzero weight, with their weights.
    pub fn active(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i, *w))
    }
}

/// mu-weights of one patch: which of the (2H/eps)^2 reference positions are
/// defective in this realization.
pub fn patch_weights(
    realization: &Realization,
    patch: &Patch,
    hier: &MeshHierarchy,
) -> WeightVector {
    let side = 2 * hier.eps_per_coarse();
    let (ox, oy) = patch.eps_origin(hier);
    WeightVector::from_defect_flags(
        (0..side * side).map(|q| realization.is_defective(ox + q % side, oy + q / side)),
    )
}

/// lambda-weights of one coarse element, over its (H/eps)^2 eps-cells.
pub fn element_weights(
    realization: &Realization,
    coarse_element: (usize, usize),
    hier: &MeshHierarchy,
) -> WeightVector {
    let side = hier.eps_per_coarse();
    let ox = coarse_element.0 * side;
    let oy = coarse_element.1 * side;
    WeightVector::from_defect_flags(
        (0..side * side).map(|q| realization.is_defective(ox + q % side, oy + q / side)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patches::build_patches;

    fn hier(h_exp: i32, coarse_exp: i32, eps_exp: i32) -> MeshHierarchy {
        MeshHierarchy::build(
            0.5f64.powi(h_exp),
            0.5f64.powi(coarse_exp),
            0.5f64.powi(eps_exp),
        )
        .unwrap()
    }

    #[test]
    fn erasure_masks_at_resolution_four() {
        let m = build_model(Geometry::Erasure, 1.0, 10.0, 0.125, 4).unwrap();
        // Central 2x2 block marked in the background, nothing in the defect.
        let mut want = vec![false; 16];
        for (x, y) in [(1usize, 1usize), (2, 1), (1, 2), (2, 2)] {
            want[y * 4 + x] = true;
        }
        assert_eq!(m.background_mask(), want.as_slice());
        assert!(m.defect_mask().iter().all(|b| !b));
    }

    #[test]
    fn lshape_mask_popcount() {
        let m = build_model(Geometry::LShape, 1.0, 10.0, 0.0625, 8).unwrap();
        // Two 2-cell-wide bars of length 6 overlapping in a 2x2 corner.
        let popcount = m.defect_mask().iter().filter(|b| **b).count();
        assert_eq!(popcount, 2 * 6 + 2 * 6 - 4);
        // Spot-check the joint corner and the two far ends.
        assert!(m.defect_mask()[2 * 8 + 2]);
        assert!(m.defect_mask()[7 * 8 + 2]); // top of the vertical bar
        assert!(m.defect_mask()[2 * 8 + 7]); // right end of the horizontal bar
        assert!(!m.defect_mask()[7 * 8 + 7]);
    }

    #[test]
    fn shifted_mask_occupies_upper_right_quadrant() {
        let m = build_model(Geometry::Shifted, 1.0, 10.0, 0.125, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(m.defect_mask()[y * 4 + x], x >= 2 && y >= 2);
            }
        }
    }

    #[test]
    fn too_small_resolution_is_rejected() {
        assert!(build_model(Geometry::Erasure, 1.0, 10.0, 0.25, 3).is_err());
        assert!(build_model(Geometry::Erasure, 1.0, 10.0, 0.25, 6).is_err());
    }

    #[test]
    fn zero_contrast_rasterizes_to_constant() {
        let h = hier(5, 2, 3);
        let m = build_model(Geometry::LShape, 2.0, 2.0, h.eps(), h.cell_resolution()).unwrap();
        let real = sample_realization(&m, &h, 0.5, 99).unwrap();
        let field = rasterize(&m, &real, &h).unwrap();
        assert!(field.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn extreme_probabilities() {
        let h = hier(5, 2, 3);
        let m = build_model(Geometry::Erasure, 1.0, 10.0, h.eps(), h.cell_resolution()).unwrap();
        let none = sample_realization(&m, &h, 0.0, 7).unwrap();
        assert_eq!(none.n_defects(), 0);
        let all = sample_realization(&m, &h, 1.0, 7).unwrap();
        assert_eq!(all.n_defects(), h.n_cells_eps() * h.n_cells_eps());
    }

    #[test]
    fn defect_fraction_lies_in_binomial_band() {
        // 10^4 cells: h = 2^-9, eps = 2^-7 gives a 100x100 eps grid... use
        // 2^-7 grid = 128^2 > 10^4 cells.
        let h = MeshHierarchy::build(0.5f64.powi(9), 0.5f64.powi(5), 0.5f64.powi(7)).unwrap();
        let m = build_model(Geometry::Erasure, 1.0, 10.0, h.eps(), h.cell_resolution()).unwrap();
        let p = 0.1;
        let real = sample_realization(&m, &h, p, 2024).unwrap();
        let n = (h.n_cells_eps() * h.n_cells_eps()) as f64;
        let fraction = real.n_defects() as f64 / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!(
            (fraction - p).abs() <= 3.0 * sigma,
            "fraction {fraction} outside 3-sigma band around {p}"
        );
    }

    #[test]
    fn identical_seed_and_p_reproduce_bits() {
        let h = hier(5, 2, 3);
        let m = build_model(Geometry::Erasure, 1.0, 10.0, h.eps(), h.cell_resolution()).unwrap();
        let a = sample_realization(&m, &h, 0.3, 11).unwrap();
        let b = sample_realization(&m, &h, 0.3, 11).unwrap();
        assert_eq!(a.defect_bits(), b.defect_bits());
        let c = sample_realization(&m, &h, 0.3, 12).unwrap();
        assert_ne!(a.defect_bits(), c.defect_bits());
    }

    #[test]
    fn rasterize_tiles_the_masks() {
        let h = hier(5, 2, 3);
        let m = build_model(Geometry::Shifted, 1.0, 10.0, h.eps(), h.cell_resolution()).unwrap();
        let resolution = h.cell_resolution();

        let none = sample_realization(&m, &h, 0.0, 0).unwrap();
        let background = rasterize(&m, &none, &h).unwrap();
        for cy in 0..h.n_fine() {
            for cx in 0..h.n_fine() {
                let want = m.cell_value(cx % resolution, cy % resolution, false);
                assert_eq!(background.values()[h.fine_cell_index(cx, cy)], want);
            }
        }

        let all = sample_realization(&m, &h, 1.0, 0).unwrap();
        let defected = rasterize(&m, &all, &h).unwrap();
        for cy in 0..h.n_fine() {
            for cx in 0..h.n_fine() {
                let want = m.cell_value(cx % resolution, cy % resolution, true);
                assert_eq!(defected.values()[h.fine_cell_index(cx, cy)], want);
            }
        }
    }

    #[test]
    fn single_defect_changes_exactly_one_cell_footprint() {
        let h = hier(5, 2, 3);
        let m = build_model(Geometry::Erasure, 1.0, 10.0, h.eps(), h.cell_resolution()).unwrap();
        let none = Realization::from_defects(h.n_cells_eps(), &[]);
        let one = Realization::from_defects(h.n_cells_eps(), &[(1, 0)]);
        let base = rasterize(&m, &none, &h).unwrap();
        let perturbed = rasterize(&m, &one, &h).unwrap();
        let resolution = h.cell_resolution();
        for cy in 0..h.n_fine() {
            for cx in 0..h.n_fine() {
                let idx = h.fine_cell_index(cx, cy);
                let inside = cx / resolution == 1 && cy / resolution == 0;
                if inside {
                    // The erasure removes the inclusion where present.
                    let want = m.cell_value(cx % resolution, cy % resolution, true);
                    assert_eq!(perturbed.values()[idx], want);
                } else {
                    assert_eq!(perturbed.values()[idx], base.values()[idx]);
                }
            }
        }
        // Values only ever alpha or beta.
        assert!(perturbed
            .values()
            .iter()
            .all(|&v| v == m.alpha() || v == m.beta()));
    }

    #[test]
    fn patch_weight_examples() {
        let h = hier(5, 2, 3); // eps_per_coarse = 2, patch side 4, N_ref = 16
        let m = build_model(Geometry::Erasure, 1.0, 10.0, h.eps(), h.cell_resolution()).unwrap();
        let patches = build_patches(&h);
        let p0 = &patches[0];

        let none = sample_realization(&m, &h, 0.0, 0).unwrap();
        let w = patch_weights(&none, p0, &h);
        assert_eq!(w.weights()[0], 1.0);
        assert!(w.weights()[1..].iter().all(|&x| x == 0.0));

        // Defects at local reference cells 3 and 7 of patch 0 (row-major on
        // the 4x4 local eps grid, origin at the patch corner).
        let real = Realization::from_defects(h.n_cells_eps(), &[(3, 0), (3, 1)]);
        let w = patch_weights(&real, p0, &h);
        assert_eq!(w.n_defects(), 2);
        assert_eq!(w.weights()[0], -1.0);
        assert_eq!(w.weights()[1 + 3], 1.0);
        assert_eq!(w.weights()[1 + 7], 1.0);
        let sum: f64 = w.weights().iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn weight_length_at_production_scale() {
        let h = hier(7, 4, 5); // H = 2^-4, eps = 2^-5
        let patches = build_patches(&h);
        let real = Realization::from_defects(h.n_cells_eps(), &[]);
        let w = patch_weights(&real, &patches[0], &h);
        assert_eq!(w.len(), 17);
    }

    #[test]
    fn element_weight_examples() {
        let h = hier(7, 4, 5); // H/eps = 2, so 4 cells per element
        let all = Realization::from_defects(
            h.n_cells_eps(),
            &(0..h.n_cells_eps())
                .flat_map(|y| (0..h.n_cells_eps()).map(move |x| (x, y)))
                .collect::<Vec<_>>(),
        );
        let w = element_weights(&all, (0, 0), &h);
        assert_eq!(w.len(), 5);
        assert_eq!(w.weights()[0], -3.0);
        assert!(w.weights()[1..].iter().all(|&x| x == 1.0));

        let none = Realization::from_defects(h.n_cells_eps(), &[]);
        let w = element_weights(&none, (1, 1), &h);
        assert_eq!(w.weights(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn weights_always_sum_to_one_exactly() {
        let h = hier(5, 2, 3);
        let m = build_model(Geometry::LShape, 1.0, 100.0, h.eps(), h.cell_resolution()).unwrap();
        let patches = build_patches(&h);
        for seed in 0..20 {
            let real = sample_realization(&m, &h, 0.35, seed).unwrap();
            for p in &patches {
                let w = patch_weights(&real, p, &h);
                let sum: f64 = w.weights().iter().sum();
                assert_eq!(sum, 1.0);
            }
            for ey in 0..h.n_coarse() {
                for ex in 0..h.n_coarse() {
                    let w = element_weights(&real, (ex, ey), &h);
                    let sum: f64 = w.weights().iter().sum();
                    assert_eq!(sum, 1.0);
                }
            }
        }
    }

    /// The restriction of the rasterized field to a patch equals the
    /// mu-weighted combination of the reference patch coefficients,
    /// entrywise exactly.
    #[test]
    fn patch_restriction_equals_weighted_reference_combination() {
        let h = hier(5, 2, 3);
        let m = build_model(Geometry::Shifted, 1.0, 100.0, h.eps(), h.cell_resolution()).unwrap();
        let patches = build_patches(&h);
        let resolution = h.cell_resolution();
        let eps_side = 2 * h.eps_per_coarse();
        let patch_cells = 2 * h.fine_per_coarse();
        for seed in 0..50 {
            let real = sample_realization(&m, &h, 0.25, seed).unwrap();
            let field = rasterize(&m, &real, &h).unwrap();
            for patch in &patches {
                let w = patch_weights(&real, patch, &h);
                let (ox, oy) = patch.offset();
                for ly in 0..patch_cells {
                    for lx in 0..patch_cells {
                        let actual =
                            field.values()[h.fine_cell_index(ox + lx, oy + ly)];
                        // Reference coefficient of configuration l at this cell.
                        let q = (ly / resolution) * eps_side + lx / resolution;
                        let mut combo = 0.0;
                        for (l, weight) in w.active() {
                            let defective = l >= 1 && l - 1 == q;
                            combo += weight
                                * m.cell_value(lx % resolution, ly % resolution, defective);
                        }
                        assert_eq!(combo, actual, "cell ({lx},{ly}) of patch");
                    }
                }
            }
        }
    }

    #[test]
    fn mask_file_round_trip() {
        let dir = std::env::temp_dir().join("oodd_mask_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mask.txt");
        let text = "4\n0000\n0110\n0110\n0000\n\n0000\n0011\n0011\n0000\n";
        std::fs::write(&path, text).unwrap();
        let (resolution, background, defect) = load_mask_file(&path).unwrap();
        assert_eq!(resolution, 4);
        let m = model_from_masks(background, defect, 1.0, 10.0, 0.125, resolution).unwrap();
        // Background: central square; file rows are top-down.
        assert!(m.background_mask()[4 + 1]);
        assert!(m.background_mask()[2 * 4 + 2]);
        assert!(!m.background_mask()[0]);
        // Defect: right-of-center block.
        assert!(m.defect_mask()[4 + 2]);
        assert!(m.defect_mask()[2 * 4 + 3]);
        assert!(!m.defect_mask()[4 + 1]);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn malformed_mask_files_are_rejected() {
        let dir = std::env::temp_dir().join("oodd_mask_test_bad");
        std::fs::create_dir_all(&dir).unwrap();
        for (name, text) in [
            ("empty.txt", ""),
            ("short.txt", "4\n0000\n0110\n"),
            ("badchar.txt", "4\n0000\n0210\n0110\n0000\n\n0000\n0000\n0000\n0000\n"),
            ("nosep.txt", "4\n0000\n0110\n0110\n0000\n0000\n0000\n0000\n0000\n"),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).unwrap();
            assert!(load_mask_file(&path).is_err(), "{name} should fail");
            std::fs::remove_file(&path).ok();
        }
    }
}
