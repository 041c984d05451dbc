//! Audio cycle to normalized gammatone spectrogram patches.

pub mod cache;
pub mod config;
pub mod filter;
pub mod frontend;
pub mod gammatone;
pub mod patch;
pub mod resample;
pub mod stft;

pub use cache::{load_cache, read_cache, save_cache, write_cache};
pub use config::FrontEndConfig;
pub use frontend::{prepare_cycle, resample_cycle, tile_to_length, FrontEnd};
pub use gammatone::{
    apply_weights, compress_and_normalize, erb_bandwidth, erb_space, gam_spectrogram,
    gammatone_weight_matrix, GammatoneWeights,
};
pub use patch::{patchify, GamPatch, LabeledPatch};
pub use resample::{resample, Resampler};
pub use stft::{hamming, stft, Stft, StftSpectrogram};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> crate::Result<Self> {
        if data.len() != rows * cols {
            return Err(crate::Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}
