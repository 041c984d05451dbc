//! Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

/// Kaiser window shape parameter.
pub const KAISER_BETA: f64 = 8.6;
/// Kernel taps per polyphase branch, measured at the lower of the two rates.
pub const TAPS_PER_PHASE: usize = 64;
/// Passband edge as a fraction of the lower Nyquist frequency.
pub const ROLLOFF: f64 = 0.92;

/// Zeroth-order modified Bessel function of the first kind.
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Converts between two fixed sample rates.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    taps: usize,
    /// `up` branches of `taps` coefficients each.
    phases: Vec<Vec<f64>>,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Self {
        assert!(
            source_rate > 0 && target_rate > 0,
            "sample rates must be positive"
        );
        let g = gcd(source_rate as u64, target_rate as u64);
        let up = (target_rate as u64 / g) as usize;
        let down = (source_rate as u64 / g) as usize;
        // cycles per input sample
        let ratio = target_rate as f64 / source_rate as f64;
        let cutoff = ROLLOFF * 0.5 * ratio.min(1.0);
        let stretch = (1.0 / ratio).max(1.0);
        let mut taps = (TAPS_PER_PHASE as f64 * stretch).ceil() as usize;
        taps += taps % 2;
        let half = taps as f64 / 2.0;
        let norm = bessel_i0(KAISER_BETA);
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut h: Vec<f64> = (0..taps)
                    .map(|k| {
                        // distance (input samples) from the output instant
                        let tau = k as f64 - half + 1.0 - frac;
                        let r = tau / half;
                        let window = if r.abs() >= 1.0 {
                            0.0
                        } else {
                            bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
                        };
                        let x = 2.0 * cutoff * tau;
                        let sinc = if x == 0.0 {
                            1.0
                        } else {
                            (PI * x).sin() / (PI * x)
                        };
                        2.0 * cutoff * sinc * window
                    })
                    .collect();
                let sum: f64 = h.iter().sum();
                h.iter_mut().for_each(|v| *v /= sum);
                h
            })
            .collect();
        Self {
            up,
            down,
            taps,
            phases,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.up == self.down
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// Output length: `round(len * target / source)`.
    pub fn output_len(&self, len: usize) -> usize {
        ((len as u128 * self.up as u128 + self.down as u128 / 2) / self.down as u128) as usize
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        if self.is_identity() {
            return input.to_vec();
        }
        let n_out = self.output_len(input.len());
        let half = (self.taps / 2) as isize;
        let len = input.len() as isize;
        (0..n_out)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as isize;
                let h = &self.phases[pos % self.up];
                let start = base - half + 1;
                let mut acc = 0.0;
                for (k, &c) in h.iter().enumerate() {
                    let idx = start + k as isize;
                    if idx >= 0 && idx < len {
                        acc += c * input[idx as usize] as f64;
                    }
                }
                acc as f32
            })
            .collect()
    }
}

/// Resamples `samples` from `source_rate` to `target_rate`. Equal rates
/// return the input unchanged.
pub fn resample(samples: &[f32], source_rate: u32, target_rate: u32) -> Vec<f32> {
    if source_rate == target_rate {
        return samples.to_vec();
    }
    Resampler::new(source_rate, target_rate).process(samples)
}
