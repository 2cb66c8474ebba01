//! Region-specific bag-of-visual-words features from multi-metric volumes,
//! k-means codebooks, greedy forward feature selection under repeated
//! cross-validation and RBF-kernel SVM classification.

pub mod classifier;
pub mod codebook;
pub mod data;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod patching;
pub mod rng;
pub mod selection;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub mod pipeline;
