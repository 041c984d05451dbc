//! Respiratory-cycle anomaly classification: gammatone front-end, C-DNN and
//! autoencoder classifiers, late fusion and ICBHI scoring.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod models;
pub mod neural;

pub use error::{Error, Result};

pub use augment::SoftLabel;
pub use dsp::{FrontEnd, FrontEndConfig, GamPatch, LabeledPatch};
pub use eval::{ConfusionMatrix4, CycleProbability, Fusion, IcbhiScores, Source};
pub use ingest::{AudioCycle, CycleLabel, Subset};
pub use models::{ArchConfig, Classifier, Network, TrainConfig};
pub use neural::{ArchTag, Checkpoint, Tensor};
