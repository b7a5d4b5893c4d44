//! Dense numeric core shared by every model: matrices and parameters,
//! activations and losses, Adam, L2 regularization, dropout, gradient
//! clipping and a central-difference gradient checker.

mod adam;
mod gradcheck;
mod ops;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error};
pub use ops::{
    clip_global_norm, cross_entropy, dropout_mask, l2_penalty, l2_regularize, log_softmax, log_sum_exp, relu,
    sigmoid, softmax, tanh, Activation,
};
pub use tensor::{Matrix, Param, Parameters, Role};
