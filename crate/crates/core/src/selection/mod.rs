//! Repeated-split cross-validation and greedy forward selection.

mod cv;
mod forward;

pub use cv::{
    best_index, evaluate_pairs, evaluate_subset, make_splits, repeated_cv_accuracy, CvConfig,
    CvOutcome, FeatureSource, RepeatOutcome, Split, TrainDiagnostics,
};
pub use forward::{greedy_forward_select, SelectionStep, SelectionTrace, StopReason};
