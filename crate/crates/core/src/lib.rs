//! Sequence-labeling toolkit for 30-day all-cause readmission prediction on
//! patient hospitalization timelines.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std`: claim timelines and their labels, the event
//! featurizer, a calibrated synthetic cohort generator, hand-differentiated
//! models (recurrent, linear-chain CRF, feedforward, convolutional and
//! logistic), cross-validated evaluation with AUC confidence intervals,
//! random hyperparameter search and feature-importance analyses.
//!
//! File formats, the command line and parallel execution live in the
//! companion `readmit` crate.

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod claims;
pub mod crf;
pub mod error;
pub mod featurizer;
pub mod feedforward;
pub mod hyperopt;
pub mod importance;
pub mod layers;
pub mod math;
pub mod model;
pub mod numerics;
pub mod recurrent;
pub mod rng;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
