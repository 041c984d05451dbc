use crate::error::{Error, Result};
use crate::neural::Tensor;

/// Layer widths shared by the three networks.
///
/// The encoder (and the C-DNN trunk) is four conv blocks widening to
/// `conv_channels`; the embedding is the last block's global max. The
/// decoder seeds a `input_h/16 x input_w/16 x decoder_seed_channels` map and
/// doubles it four times through `decoder_channels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub conv_channels: [usize; 4],
    pub dense_width: usize,
    pub decoder_seed_channels: usize,
    pub decoder_channels: [usize; 4],
}

pub const BLOCK_DROPOUT: [f64; 4] = [0.10, 0.15, 0.20, 0.25];
pub const CDNN_HEAD_DROPOUT: f64 = 0.30;
pub const MLP_DROPOUT: f64 = 0.50;

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_h: 128,
            input_w: 256,
            conv_channels: [64, 128, 256, 512],
            dense_width: 1024,
            decoder_seed_channels: 256,
            decoder_channels: [128, 64, 32, 1],
        }
    }
}

impl ArchConfig {
    /// A narrow variant for fast tests and smoke runs.
    pub fn small(input_h: usize, input_w: usize) -> Self {
        Self {
            input_h,
            input_w,
            conv_channels: [8, 16, 16, 32],
            dense_width: 64,
            decoder_seed_channels: 16,
            decoder_channels: [16, 8, 8, 1],
        }
    }

    pub fn embedding_width(&self) -> usize {
        self.conv_channels[3]
    }

    pub fn seed_shape(&self) -> [usize; 3] {
        [
            self.input_h / 16,
            self.input_w / 16,
            self.decoder_seed_channels,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.input_h,
            self.input_w,
            self.dense_width,
            self.decoder_seed_channels,
        ]
        .iter()
        .chain(&self.conv_channels)
        .chain(&self.decoder_channels)
        .all(|&v| v > 0);
        if !positive {
            return Err(Error::Config("architecture widths must be positive".into()));
        }
        if !self.input_h.is_multiple_of(16) || !self.input_w.is_multiple_of(16) {
            return Err(Error::Config(format!(
                "input {}x{} must be divisible by 16 for the decoder",
                self.input_h, self.input_w
            )));
        }
        if self.decoder_channels[3] != 1 {
            return Err(Error::Config(
                "the decoder must end with one channel".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn to_tensor(&self) -> Tensor<f32> {
        let mut v = vec![self.input_h, self.input_w];
        v.extend(self.conv_channels);
        v.push(self.dense_width);
        v.push(self.decoder_seed_channels);
        v.extend(self.decoder_channels);
        Tensor::from_vec(&[v.len()], v.into_iter().map(|x| x as f32).collect())
            .expect("arch vector")
    }

    pub(crate) fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        let v: Vec<usize> = t.data().iter().map(|&x| x as usize).collect();
        if v.len() != 12 {
            return Err(Error::Format {
                kind: "checkpoint",
                message: format!("architecture record has {} fields", v.len()),
            });
        }
        let four = |i: usize| [v[i], v[i + 1], v[i + 2], v[i + 3]];
        let arch = Self {
            input_h: v[0],
            input_w: v[1],
            conv_channels: four(2),
            dense_width: v[6],
            decoder_seed_channels: v[7],
            decoder_channels: four(8),
        };
        arch.validate()?;
        Ok(arch)
    }
}
