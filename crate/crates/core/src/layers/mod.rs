//! Building blocks with explicit forward caches and backward passes.

mod batchnorm;
mod cell;
mod dense;

pub use batchnorm::{BatchNorm, BnCache};
pub use cell::{CellKind, RecurrentLayer, StepCache};
pub use dense::{Dense, Embed};
