//! The C-DNN, the encoder-decoder, and the MLP head, with their trainers.

pub mod arch;
pub mod network;
pub mod predict;
pub mod train;

pub use arch::ArchConfig;
pub use network::{patches_to_tensor, Network};
pub use predict::{cycle_probabilities, mean_probabilities, predict_cycles, Classifier};
pub use train::{
    accuracy, embed, train_autoencoder, train_cdnn, train_classifier, train_mlp_head, EpochLog,
    LabeledSet, TrainConfig, TrainLog,
};
