//! Domain types and file I/O for volumes, masks, and clinical covariates.

mod clinical;
mod dataset;
mod ids;
mod volume;

pub use clinical::{
    format_clinical, load_clinical, parse_clinical, write_clinical, ClinicalRecord,
    CLINICAL_HEADER, COVARIATE_NAMES,
};
pub use dataset::{
    load_dataset, write_dataset, Channel, Dataset, Manifest, ManifestChannel, ManifestSubject,
    Subject, CLINICAL_FILE, MANIFEST_FILE,
};
pub use ids::{Cohort, FeatureKey, MetricId, RegionId};
pub use volume::{
    decode_mask, decode_volume, encode_mask, encode_volume, load_mask, load_volume, write_mask,
    write_volume, Dims, MetricVolume, RoiMask,
};
