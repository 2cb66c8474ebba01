//! Classification metrics, result tables, plots and codebook images.

mod curves;
mod metrics;
mod render;
pub mod svg;

pub use curves::{
    cohort_histogram_contrast, subset_size_curve, training_ratio_curve, write_contrast_csv,
    write_ratio_csv, write_subset_csv, ContrastRow, RatioRow, SubsetRow,
};
pub use metrics::{accuracy, confusion, sensitivity, specificity, ConfusionCounts};
pub use render::{decode_pgm, encode_word_pgm, render_words, word_file_name, Pgm, MID_GRAY};
