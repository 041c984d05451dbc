use crate::error::{Error, Result};

/// Front-end constants: resampling, cycle length, band edges, STFT framing,
/// gammatone channel count and patch width.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndConfig {
    pub target_rate: u32,
    pub cycle_duration_s: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub fft_size: usize,
    pub window_s: f64,
    pub hop_s: f64,
    pub n_gammatone: usize,
    pub patch_time: usize,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        Self {
            target_rate: 4000,
            cycle_duration_s: 10.0,
            band_low_hz: 100.0,
            band_high_hz: 2000.0,
            fft_size: 1024,
            window_s: 0.2,
            hop_s: 0.04,
            n_gammatone: 128,
            patch_time: 256,
        }
    }
}

impl FrontEndConfig {
    pub fn window_len(&self) -> usize {
        (self.window_s * self.target_rate as f64).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_s * self.target_rate as f64).round() as usize
    }

    pub fn cycle_len(&self) -> usize {
        (self.cycle_duration_s * self.target_rate as f64).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of STFT frames produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        let win = self.window_len();
        if len < win {
            0
        } else {
            (len - win) / self.hop_len() + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.target_rate == 0 {
            return fail("target_rate must be positive".into());
        }
        if !(self.band_low_hz > 0.0 && self.band_low_hz < self.band_high_hz) {
            return fail(format!(
                "band edges must satisfy 0 < low < high, got {} .. {}",
                self.band_low_hz, self.band_high_hz
            ));
        }
        if self.band_high_hz > self.target_rate as f64 / 2.0 {
            return fail(format!(
                "band_high {} exceeds Nyquist {}",
                self.band_high_hz,
                self.target_rate as f64 / 2.0
            ));
        }
        if self.window_len() == 0 || self.hop_len() == 0 {
            return fail("window and hop must span at least one sample".into());
        }
        if self.window_len() > self.fft_size {
            return fail(format!(
                "window of {} samples exceeds fft_size {}",
                self.window_len(),
                self.fft_size
            ));
        }
        if !(self.cycle_duration_s > 0.0) || self.cycle_len() < self.window_len() {
            return fail("cycle duration must cover at least one window".into());
        }
        if self.n_gammatone == 0 || self.patch_time == 0 {
            return fail("patch dimensions must be positive".into());
        }
        Ok(())
    }
}
