use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::config::FrontEndConfig;
use super::Matrix;
use crate::error::{Error, Result};

/// Magnitude spectrogram with bins on rows and frames on columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StftSpectrogram {
    /// `n_bins x n_frames`, all entries nonnegative.
    pub magnitudes: Matrix,
    pub bin_freqs: Vec<f64>,
    /// Frame centres in seconds.
    pub frame_times: Vec<f64>,
}

/// Symmetric Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Frames `[t * hop, t * hop + window)`, applies a Hamming window, zero-pads
/// each frame to `fft_size` and keeps the one-sided DFT magnitude.
pub struct Stft {
    window: Vec<f64>,
    hop: usize,
    fft_size: usize,
    rate: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: &FrontEndConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Self {
            window: hamming(cfg.window_len()),
            hop: cfg.hop_len(),
            fft_size: cfg.fft_size,
            rate: cfg.target_rate as f64,
            fft,
        }
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn process(&self, signal: &[f32]) -> Result<StftSpectrogram> {
        let win = self.window.len();
        if signal.len() < win {
            return Err(Error::invalid(format!(
                "signal of {} samples is shorter than one {win}-sample window",
                signal.len()
            )));
        }
        let frames = (signal.len() - win) / self.hop + 1;
        let bins = self.fft_size / 2 + 1;
        let mut mags = Matrix::zeros(bins, frames);
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..frames {
            let frame = &signal[t * self.hop..t * self.hop + win];
            for (slot, (&s, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *slot = Complex::new(s as f64 * w, 0.0);
            }
            buf[win..]
                .iter_mut()
                .for_each(|c| *c = Complex::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (f, c) in buf.iter().take(bins).enumerate() {
                mags.set(f, t, c.norm());
            }
        }
        Ok(StftSpectrogram {
            magnitudes: mags,
            bin_freqs: (0..bins)
                .map(|f| f as f64 * self.rate / self.fft_size as f64)
                .collect(),
            frame_times: (0..frames)
                .map(|t| (t * self.hop) as f64 / self.rate + win as f64 / (2.0 * self.rate))
                .collect(),
        })
    }
}

pub fn stft(signal: &[f32], cfg: &FrontEndConfig) -> Result<StftSpectrogram> {
    Stft::new(cfg).process(signal)
}
