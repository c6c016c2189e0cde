//! Runtime registry of preconditioner variants. Each variant implements
//! [`VariantBuilder`] and is looked up by its CLI name, so drivers select
//! strategies from configuration strings.

use crate::coefficient::{patch_weights, Realization};
use crate::error::{Error, Result};
use crate::mesh::{assemble_stiffness, prolongation, MeshLevel};
use crate::patches::{translation_map, ReferencePatch};
use crate::precond::coarse::{assemble_coarse_operator, CoarseMode};
use crate::precond::{
    build_direct_local, BuildContext, DictionaryLocal, DirectLocal, FrozenLocal, NdCoarseMode,
    ReferenceDictionary, TwoLevelPrecond,
};
use crate::sparse::SpdFactorization;
use std::sync::Arc;

/// One interchangeable preconditioner variant.
pub trait VariantBuilder: Send + Sync {
    /// Registry key, also used on the CLI and in CSV output.
    fn name(&self) -> &'static str;

    /// One-line description for usage text.
    fn summary(&self) -> &'static str;

    /// Whether [`BuildContext::dictionary`] must be present.
    fn needs_dictionary(&self) -> bool;

    fn build(&self, ctx: &BuildContext<'_>) -> Result<TwoLevelPrecond>;
}

struct DirectDd;
struct NdDd;
struct OoDd;

static REGISTRY: [&dyn VariantBuilder; 3] = [&DirectDd, &NdDd, &OoDd];

/// All registered variants, in canonical order.
pub fn variants() -> &'static [&'static dyn VariantBuilder] {
    &REGISTRY
}

/// Finds a variant by its registry name.
pub fn lookup(name: &str) -> Option<&'static dyn VariantBuilder> {
    REGISTRY.iter().find(|v| v.name() == name).copied()
}

/// Builds the named variant, erroring on unknown names.
pub fn build_preconditioner(name: &str, ctx: &BuildContext<'_>) -> Result<TwoLevelPrecond> {
    let builder = lookup(name).ok_or_else(|| {
        let known: Vec<_> = REGISTRY.iter().map(|v| v.name()).collect();
        Error::Config(format!(
            "unknown preconditioner variant '{name}' (known: {})",
            known.join(", ")
        ))
    })?;
    builder.build(ctx)
}

fn required_dictionary(ctx: &BuildContext<'_>, variant: &str) -> Result<Arc<ReferenceDictionary>> {
    let dict = ctx
        .dictionary
        .as_ref()
        .ok_or_else(|| {
            Error::Config(format!(
                "variant '{variant}' requires the offline reference dictionary"
            ))
        })?
        .clone();
    if !dict.matches(ctx.model, ctx.hier) {
        return Err(Error::Config(format!(
            "dictionary was built for a different (mesh, geometry, contrast) than this '{variant}' build"
        )));
    }
    Ok(dict)
}

fn translation_maps(ctx: &BuildContext<'_>) -> Result<Vec<Vec<usize>>> {
    let reference = ReferencePatch::new(ctx.hier);
    ctx.patches
        .iter()
        .map(|p| translation_map(p, &reference, ctx.hier))
        .collect()
}

impl VariantBuilder for DirectDd {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn summary(&self) -> &'static str {
        "exact per-realization patch factorizations"
    }

    fn needs_dictionary(&self) -> bool {
        false
    }

    fn build(&self, ctx: &BuildContext<'_>) -> Result<TwoLevelPrecond> {
        let k0 = assemble_stiffness(MeshLevel::Coarse, ctx.field, ctx.hier)?;
        let coarse_factor = SpdFactorization::new(&k0)?;
        let factors: Vec<SpdFactorization> = ctx
            .patches
            .iter()
            .map(|p| build_direct_local(p, ctx.field, ctx.hier))
            .collect::<Result<_>>()?;
        let patch_factorizations = factors.len();
        Ok(TwoLevelPrecond {
            variant: self.name(),
            dim: ctx.hier.fine_dof_count(),
            coarse_factor,
            prolongation: prolongation(ctx.hier),
            patches: ctx.patches.to_vec(),
            local: Box::new(DirectLocal { factors }),
            patch_factorizations,
        })
    }
}

impl VariantBuilder for NdDd {
    fn name(&self) -> &'static str {
        "nd"
    }

    fn summary(&self) -> &'static str {
        "frozen defect-free preconditioner reused across realizations"
    }

    fn needs_dictionary(&self) -> bool {
        true
    }

    fn build(&self, ctx: &BuildContext<'_>) -> Result<TwoLevelPrecond> {
        let dict = required_dictionary(ctx, self.name())?;
        let coarse_factor = match ctx.nd_coarse {
            NdCoarseMode::Frozen => {
                let background = Realization::from_defects(ctx.hier.n_cells_eps(), &[]);
                assemble_coarse_operator(&dict, &background, ctx.hier, CoarseMode::Oo)?
            }
            NdCoarseMode::Exact => {
                assemble_coarse_operator(&dict, ctx.realization, ctx.hier, CoarseMode::Oo)?
            }
        };
        Ok(TwoLevelPrecond {
            variant: self.name(),
            dim: ctx.hier.fine_dof_count(),
            coarse_factor,
            prolongation: prolongation(ctx.hier),
            patches: ctx.patches.to_vec(),
            local: Box::new(FrozenLocal {
                dict,
                maps: translation_maps(ctx)?,
            }),
            patch_factorizations: 0,
        })
    }
}

impl VariantBuilder for OoDd {
    fn name(&self) -> &'static str {
        "oo"
    }

    fn summary(&self) -> &'static str {
        "offline-online dictionary recombination"
    }

    fn needs_dictionary(&self) -> bool {
        true
    }

    fn build(&self, ctx: &BuildContext<'_>) -> Result<TwoLevelPrecond> {
        let dict = required_dictionary(ctx, self.name())?;
        let coarse_factor =
            assemble_coarse_operator(&dict, ctx.realization, ctx.hier, CoarseMode::Oo)?;
        let weights = ctx
            .patches
            .iter()
            .map(|p| patch_weights(ctx.realization, p, ctx.hier))
            .collect();
        Ok(TwoLevelPrecond {
            variant: self.name(),
            dim: ctx.hier.fine_dof_count(),
            coarse_factor,
            prolongation: prolongation(ctx.hier),
            patches: ctx.patches.to_vec(),
            local: Box::new(DictionaryLocal {
                dict,
                maps: translation_maps(ctx)?,
                weights,
            }),
            patch_factorizations: 0,
        })
    }
}
