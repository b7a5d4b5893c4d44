//! First-order linear-chain CRFs whose potentials come from a linear map,
//! a per-event nonlinear encoder or a recurrent stack.

mod model;
mod trellis;

pub use model::{CrfConfig, CrfModel, Encoder, Potential};
pub use trellis::{forward_backward, viterbi, CrfPotentials, TrellisResult};

/// Labels of the readmission chain: no readmission, readmission.
pub const N_LABELS: usize = 2;
