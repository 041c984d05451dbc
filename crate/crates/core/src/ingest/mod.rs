//! ICBHI recordings and annotations into labelled cycles.

pub mod annotation;
pub mod audio;
pub mod cycles;
pub mod dataset;
pub mod label;

pub use annotation::{parse_annotation_file, serialize_annotations, CycleAnnotation};
pub use audio::{read_wav, Recording};
pub use cycles::{
    class_counts, extract_cycles, official_split, parse_split_file, AudioCycle, SplitTable,
    OFFSET_TOLERANCE_S,
};
pub use dataset::{
    find_recordings, load_directory, load_split_dataset, read_manifest, write_manifest, LoadReport,
    ManifestRow,
};
pub use label::{label_of, CycleLabel, Subset, NUM_CLASSES};
