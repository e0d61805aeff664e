//! Sample formats, source-to-grid mappings, preprocessing and synthetic data.

mod mapping;
mod preprocess;
mod sample;
mod synth;

pub use mapping::{apply_mapping, GridMapping, Record, UnassignedPolicy};
pub use preprocess::{
    balance_undersample, decimate, segment, zscore, Segment, SegmentStatus, Segmentation,
};
pub use sample::{Dataset, GridSample, Provenance, GTSD_MAGIC, GTSD_VERSION, INDEX_FILE};
pub use synth::{synth_dataset, SynthSpec};
