use super::config::FrontEndConfig;
use super::Matrix;
use crate::ingest::CycleLabel;

/// A `channels x patch_time` slice of a gammatone spectrogram, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GamPatch {
    pub values: Vec<f32>,
    pub rows: usize,
    pub cols: usize,
    pub cycle_id: String,
    pub patch_index: u32,
}

impl GamPatch {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    pub fn is_valid(&self) -> bool {
        self.values.len() == self.rows * self.cols
            && self
                .values
                .iter()
                .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }
}

/// A patch together with its cycle's class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub patch: GamPatch,
    pub label: CycleLabel,
}

/// Wrap-pads the time axis (repeating columns from the start) to the next
/// multiple of `patch_time`, then cuts consecutive non-overlapping patches.
pub fn patchify(gam: &Matrix, cycle_id: &str, cfg: &FrontEndConfig) -> Vec<GamPatch> {
    let (rows, frames) = (gam.rows(), gam.cols());
    let width = cfg.patch_time;
    if frames == 0 {
        return Vec::new();
    }
    let count = frames.div_ceil(width);
    (0..count)
        .map(|p| {
            let mut values = Vec::with_capacity(rows * width);
            for r in 0..rows {
                for c in 0..width {
                    values.push(gam.get(r, (p * width + c) % frames) as f32);
                }
            }
            GamPatch {
                values,
                rows,
                cols: width,
                cycle_id: cycle_id.to_string(),
                patch_index: p as u32,
            }
        })
        .collect()
}
