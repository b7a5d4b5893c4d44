//! Cross-validation, class weighting, mini-batch training with
//! validation-based epoch selection, and AUC evaluation.

mod cv;
mod folds;
mod metrics;
mod train;

pub use cv::{assemble, cross_validate, logistic_grid, run_fold, CvOptions, EvalReport, FoldRun, FoldSummary, Prediction};
pub use folds::{class_weights, make_folds, stratified_holdout, stratified_subset, Fold, FoldPlan};
pub use metrics::{auc, auc_by_length, auc_ci, delong_variance, normal_critical, AucInterval, LengthBucket};
pub use train::{fit_logistic, train_model, EpochRecord, TrainOutcome};
