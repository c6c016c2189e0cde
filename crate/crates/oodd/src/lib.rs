//! Two-level additive Schwarz preconditioning for 2D elliptic diffusion
//! problems whose coefficient is a periodic background perturbed by
//! localized random defects. The expensive patch-local factorizations are
//! computed offline for a dictionary of single-defect reference
//! configurations and recombined algebraically online, per realization.

// Indexed loops are the house style in the numeric kernels, and the
// negated-comparison guards (`!(x > 0.0)`) intentionally reject NaN.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coefficient;
pub mod error;
pub mod mesh;
pub mod patches;
pub mod pcg;
pub mod precond;
pub mod rng;
pub mod sparse;

pub use error::{Error, Result};
