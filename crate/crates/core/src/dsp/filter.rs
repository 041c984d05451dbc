//! Butterworth high-pass as cascaded biquads.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn highpass(cutoff_hz: f64, rate: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [
                (1.0 + cos) / 2.0 / a0,
                -(1.0 + cos) / a0,
                (1.0 + cos) / 2.0 / a0,
            ],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * out + z2;
            z2 = self.b[2] * input - self.a[1] * out;
            *v = out;
        }
    }
}

/// Even-order Butterworth high-pass filter.
#[derive(Debug, Clone)]
pub struct HighPass {
    sections: Vec<Biquad>,
}

impl HighPass {
    pub fn butterworth(order: usize, cutoff_hz: f64, rate: f64) -> Self {
        assert!(order >= 2 && order.is_multiple_of(2), "order must be even");
        let sections = (0..order / 2)
            .map(|k| {
                let theta = PI * (2 * k + 1) as f64 / (2 * order) as f64;
                Biquad::highpass(cutoff_hz, rate, 1.0 / (2.0 * theta.cos()))
            })
            .collect();
        Self { sections }
    }

    pub fn apply(&self, samples: &[f32]) -> Vec<f32> {
        let mut x: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
        for s in &self.sections {
            s.run(&mut x);
        }
        x.into_iter().map(|v| v as f32).collect()
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain(&self, freq_hz: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / rate;
        self.sections
            .iter()
            .map(|s| {
                let z1 = num_complex(-w);
                let z2 = num_complex(-2.0 * w);
                let num = add3(s.b[0], scale(z1, s.b[1]), scale(z2, s.b[2]));
                let den = add3(1.0, scale(z1, s.a[0]), scale(z2, s.a[1]));
                abs(num) / abs(den)
            })
            .product()
    }
}

fn num_complex(phase: f64) -> (f64, f64) {
    (phase.cos(), phase.sin())
}

fn scale(z: (f64, f64), k: f64) -> (f64, f64) {
    (z.0 * k, z.1 * k)
}

fn add3(a: f64, b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    (a + b.0 + c.0, b.1 + c.1)
}

fn abs(z: (f64, f64)) -> f64 {
    z.0.hypot(z.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_response_is_butterworth() {
        let hp = HighPass::butterworth(4, 100.0, 4000.0);
        assert!((hp.gain(100.0, 4000.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(hp.gain(1000.0, 4000.0) > 0.999);
        // analog prototype gives 1/sqrt(1 + 2^8) at half the cutoff
        let g50 = hp.gain(50.0, 4000.0);
        assert!((g50 - 1.0 / 257f64.sqrt()).abs() < 2e-3, "{g50}");
    }
}
