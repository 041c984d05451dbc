//! Gammatone-like spectrogram: an ERB-spaced bank of gammatone magnitude
//! responses applied as a weighting matrix to STFT magnitudes.

use super::config::FrontEndConfig;
use super::stft::StftSpectrogram;
use super::Matrix;
use crate::error::{Error, Result};
use crate::neural::tensor::{gemm, MatRef};

pub const GAMMATONE_ORDER: i32 = 4;
pub const BANDWIDTH_FACTOR: f64 = 1.019;
const ERB_Q: f64 = 4.37e-3;
const ERB_MIN: f64 = 24.7;
/// Floor added before the log compression.
pub const LOG_EPSILON: f64 = 1e-6;

/// Equivalent rectangular bandwidth `24.7 * (4.37e-3 * f + 1)` in Hz.
pub fn erb_bandwidth(freq_hz: f64) -> f64 {
    ERB_MIN * (ERB_Q * freq_hz + 1.0)
}

/// Number of ERBs below `freq_hz` (integral of `1 / erb_bandwidth`).
pub fn erb_rate(freq_hz: f64) -> f64 {
    (ERB_Q * freq_hz).ln_1p() / (ERB_MIN * ERB_Q)
}

pub fn erb_rate_to_hz(rate: f64) -> f64 {
    (rate * ERB_MIN * ERB_Q).exp_m1() / ERB_Q
}

/// `n` centre frequencies uniformly spaced on the ERB-rate scale, with the
/// first at `low` and the last at `high`.
pub fn erb_space(low: f64, high: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![low];
    }
    let (a, b) = (erb_rate(low), erb_rate(high));
    (0..n)
        .map(|i| match i {
            0 => low,
            i if i == n - 1 => high,
            i => erb_rate_to_hz(a + (b - a) * i as f64 / (n - 1) as f64),
        })
        .collect()
}

/// Magnitude of an order-`P` gammatone filter centred at `center` with
/// bandwidth `b = 1.019 * ERB(center)`, relative to its peak.
pub fn gammatone_response(freq: f64, center: f64) -> f64 {
    let b = BANDWIDTH_FACTOR * erb_bandwidth(center);
    let d = (freq - center) / b;
    (1.0 + d * d).powf(-(GAMMATONE_ORDER as f64) / 2.0)
}

/// Row-normalized weighting matrix `channels x bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammatoneWeights {
    pub coe: Matrix,
    pub center_freqs: Vec<f64>,
}

pub fn gammatone_weight_matrix(cfg: &FrontEndConfig) -> Result<GammatoneWeights> {
    if !(cfg.band_low_hz < cfg.band_high_hz) {
        return Err(Error::Config(format!(
            "band_low {} must be below band_high {}",
            cfg.band_low_hz, cfg.band_high_hz
        )));
    }
    if cfg.n_gammatone == 0 {
        return Err(Error::Config("n_gammatone must be positive".into()));
    }
    let bins = cfg.n_bins();
    let bin_hz = cfg.target_rate as f64 / cfg.fft_size as f64;
    let centers = erb_space(cfg.band_low_hz, cfg.band_high_hz, cfg.n_gammatone);
    let mut coe = Matrix::zeros(centers.len(), bins);
    for (g, &fc) in centers.iter().enumerate() {
        let row: Vec<f64> = (0..bins)
            .map(|f| gammatone_response(f as f64 * bin_hz, fc))
            .collect();
        let total: f64 = row.iter().sum();
        for (f, v) in row.into_iter().enumerate() {
            coe.set(g, f, v / total);
        }
    }
    Ok(GammatoneWeights {
        coe,
        center_freqs: centers,
    })
}

/// Raw weighted spectrogram `COE x STFT` (no compression).
pub fn apply_weights(stft: &StftSpectrogram, weights: &GammatoneWeights) -> Result<Matrix> {
    let s = &stft.magnitudes;
    let w = &weights.coe;
    if w.cols() != s.rows() {
        return Err(Error::shape(format!(
            "weights have {} bins, spectrogram has {}",
            w.cols(),
            s.rows()
        )));
    }
    let mut out = Matrix::zeros(w.rows(), s.cols());
    gemm(
        1.0,
        MatRef::new(w.data(), w.rows(), w.cols()),
        MatRef::new(s.data(), s.rows(), s.cols()),
        0.0,
        out.data_mut(),
    );
    Ok(out)
}

/// `log(x + 1e-6)` followed by a min-max rescale of the whole matrix to
/// `[0, 1]`. A constant matrix maps to all zeros.
pub fn compress_and_normalize(mut m: Matrix) -> Matrix {
    m.data_mut()
        .iter_mut()
        .for_each(|v| *v = (*v + LOG_EPSILON).ln());
    let (lo, hi) = m
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        m.data_mut().iter_mut().for_each(|v| *v = 0.0);
    } else {
        m.data_mut()
            .iter_mut()
            .for_each(|v| *v = ((*v - lo) / range).clamp(0.0, 1.0));
    }
    m
}

/// Gammatone spectrogram `channels x frames`, values in `[0, 1]`.
pub fn gam_spectrogram(stft: &StftSpectrogram, weights: &GammatoneWeights) -> Result<Matrix> {
    Ok(compress_and_normalize(apply_weights(stft, weights)?))
}
