use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{ArchConfig, BLOCK_DROPOUT, CDNN_HEAD_DROPOUT, MLP_DROPOUT};
use crate::dsp::GamPatch;
use crate::error::{Error, Result};
use crate::ingest::NUM_CLASSES;
use crate::neural::{
    Adam, ArchTag, BatchNorm, Checkpoint, Context, Conv2d, ConvTranspose2d, Dense, Dropout,
    GlobalMaxPool, MaxPool2x2, NamedTensor, Relu, Reshape, Sequential, Softmax, Tensor,
};

const ARCH_RECORD: &str = "meta.arch";
const ADAM_STEP: &str = "adam.step";
const INFER_CHUNK: usize = 16;

/// One of the four trainable stacks together with its optimizer state.
pub struct Network {
    pub kind: ArchTag,
    pub arch: ArchConfig,
    pub net: Sequential<f32>,
    pub adam: Adam,
}

/// Bn-Cv-Relu-Bn-Mp-Dr blocks; the last block pools globally.
fn push_conv_blocks(net: &mut Sequential<f32>, arch: &ArchConfig, rng: &mut ChaCha8Rng) {
    let mut cin = 1;
    for (i, &cout) in arch.conv_channels.iter().enumerate() {
        let name = format!("block{}", i + 1);
        net.push(BatchNorm::new(&format!("{name}.bn_in"), cin));
        net.push(Conv2d::new(&format!("{name}.conv"), cin, cout, rng));
        net.push(Relu::new());
        net.push(BatchNorm::new(&format!("{name}.bn_out"), cout));
        if i < 3 {
            net.push(MaxPool2x2::new());
        } else {
            net.push(GlobalMaxPool::new());
        }
        net.push(Dropout::new(BLOCK_DROPOUT[i]));
        cin = cout;
    }
}

impl Network {
    fn with(
        kind: ArchTag,
        arch: &ArchConfig,
        seed: u64,
        build: impl FnOnce(&mut Sequential<f32>, &mut ChaCha8Rng),
    ) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(kind as u64);
        let mut net = Sequential::new();
        build(&mut net, &mut rng);
        Ok(Self {
            kind,
            arch: arch.clone(),
            net,
            adam: Adam::default(),
        })
    }

    /// Patch `[N, H, W, 1]` to class probabilities `[N, 4]`.
    pub fn cdnn(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Self::with(ArchTag::Cdnn, arch, seed, |net, rng| {
            push_conv_blocks(net, arch, rng);
            net.push(Dense::new(
                "head.fc1",
                arch.embedding_width(),
                arch.dense_width,
                rng,
            ));
            net.push(Relu::new());
            net.push(Dropout::new(CDNN_HEAD_DROPOUT));
            net.push(Dense::new("head.fc2", arch.dense_width, NUM_CLASSES, rng));
            net.push(Softmax::new());
        })
    }

    /// Patch `[N, H, W, 1]` to embedding `[N, E]`.
    pub fn encoder(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Self::with(ArchTag::Encoder, arch, seed, |net, rng| {
            push_conv_blocks(net, arch, rng)
        })
    }

    /// Embedding `[N, E]` to reconstruction `[N, H, W, 1]`.
    pub fn decoder(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Self::with(ArchTag::Decoder, arch, seed, |net, rng| {
            let seed_shape = arch.seed_shape();
            net.push(Dense::new(
                "decoder.fc",
                arch.embedding_width(),
                seed_shape.iter().product(),
                rng,
            ));
            net.push(Relu::new());
            net.push(Reshape::new(&seed_shape));
            let mut cin = arch.decoder_seed_channels;
            for (i, &cout) in arch.decoder_channels.iter().enumerate() {
                net.push(ConvTranspose2d::new(
                    &format!("decoder.deconv{}", i + 1),
                    cin,
                    cout,
                    rng,
                ));
                net.push(Relu::new());
                cin = cout;
            }
        })
    }

    /// Embedding `[N, E]` to class probabilities `[N, 4]`.
    pub fn mlp(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Self::with(ArchTag::Mlp, arch, seed, |net, rng| {
            let mut din = arch.embedding_width();
            for i in 1..=2 {
                net.push(Dense::new(
                    &format!("mlp.fc{i}"),
                    din,
                    arch.dense_width,
                    rng,
                ));
                net.push(Relu::new());
                net.push(Dropout::new(MLP_DROPOUT));
                din = arch.dense_width;
            }
            net.push(Dense::new("mlp.fc3", din, NUM_CLASSES, rng));
            net.push(Softmax::new());
        })
    }

    pub fn build(kind: ArchTag, arch: &ArchConfig, seed: u64) -> Result<Self> {
        match kind {
            ArchTag::Cdnn => Self::cdnn(arch, seed),
            ArchTag::Encoder => Self::encoder(arch, seed),
            ArchTag::Decoder => Self::decoder(arch, seed),
            ArchTag::Mlp => Self::mlp(arch, seed),
        }
    }

    /// Parameter names and shapes in layer order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.net
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.value.shape().to_vec()))
            .collect()
    }

    /// Inference-mode forward pass in fixed-size chunks.
    pub fn predict(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let n = x.batch();
        let item_shape = &x.shape()[1..];
        let d = x.item_len();
        let mut out = Vec::new();
        let mut out_item = Vec::new();
        for start in (0..n).step_by(INFER_CHUNK) {
            let end = (start + INFER_CHUNK).min(n);
            let mut shape = vec![end - start];
            shape.extend_from_slice(item_shape);
            let chunk = Tensor::from_vec(&shape, x.data()[start * d..end * d].to_vec())?;
            let y = self.net.forward(chunk, &mut Context::infer())?;
            out_item = y.shape()[1..].to_vec();
            out.extend_from_slice(y.data());
        }
        let mut shape = vec![n];
        shape.extend(out_item);
        Tensor::from_vec(&shape, out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let params = self.net.params();
        let mut adam = vec![NamedTensor::new(
            ADAM_STEP,
            Tensor::scalar(self.adam.step as f32),
        )];
        for p in &params {
            adam.push(NamedTensor::new(format!("{}.m", p.name), p.moment1.clone()));
            adam.push(NamedTensor::new(format!("{}.v", p.name), p.moment2.clone()));
        }
        let mut buffers: Vec<NamedTensor> = self
            .net
            .buffers()
            .iter()
            .map(|b| NamedTensor::new(b.name.clone(), b.value.clone()))
            .collect();
        buffers.push(NamedTensor::new(ARCH_RECORD, self.arch.to_tensor()));
        Checkpoint {
            arch: self.kind,
            params: params
                .iter()
                .map(|p| NamedTensor::new(p.name.clone(), p.value.clone()))
                .collect(),
            adam,
            buffers,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, expected: ArchTag) -> Result<Self> {
        let bad = |message: String| Error::Format {
            kind: "checkpoint",
            message,
        };
        if ckpt.arch != expected {
            return Err(bad(format!(
                "holds a {:?} network, expected {:?}",
                ckpt.arch, expected
            )));
        }
        let arch_t = ckpt
            .find_buffer(ARCH_RECORD)
            .ok_or_else(|| bad(format!("missing {ARCH_RECORD}")))?;
        let arch = ArchConfig::from_tensor(arch_t)?;
        let mut network = Self::build(expected, &arch, 0)?;
        let find = |list: &[NamedTensor], name: &str| {
            list.iter()
                .find(|e| e.name == name)
                .map(|e| e.tensor.clone())
        };
        let fetch = |list: &[NamedTensor], name: &str, shape: &[usize]| -> Result<Tensor<f32>> {
            let t = find(list, name).ok_or_else(|| bad(format!("missing {name}")))?;
            if t.shape() != shape {
                return Err(bad(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t)
        };
        for p in network.net.params_mut() {
            let shape = p.value.shape().to_vec();
            p.value = fetch(&ckpt.params, &p.name, &shape)?;
            p.moment1 = fetch(&ckpt.adam, &format!("{}.m", p.name), &shape)?;
            p.moment2 = fetch(&ckpt.adam, &format!("{}.v", p.name), &shape)?;
        }
        for b in network.net.buffers_mut() {
            let shape = b.value.shape().to_vec();
            b.value = fetch(&ckpt.buffers, &b.name, &shape)?;
        }
        network.adam.step = find(&ckpt.adam, ADAM_STEP)
            .map(|t| t.data()[0] as u64)
            .unwrap_or(0);
        Ok(network)
    }
}

/// Stacks patches into an `[N, rows, cols, 1]` batch.
pub fn patches_to_tensor<'a>(
    patches: impl IntoIterator<Item = &'a GamPatch>,
) -> Result<Tensor<f32>> {
    let mut data = Vec::new();
    let mut dims = None;
    let mut n = 0;
    for p in patches {
        match dims {
            None => dims = Some((p.rows, p.cols)),
            Some(d) if d != (p.rows, p.cols) => {
                return Err(Error::shape(format!(
                    "patch {}x{} in a {}x{} batch",
                    p.rows, p.cols, d.0, d.1
                )))
            }
            _ => {}
        }
        data.extend_from_slice(&p.values);
        n += 1;
    }
    let (h, w) = dims.ok_or_else(|| Error::invalid("no patches"))?;
    Tensor::from_vec(&[n, h, w, 1], data)
}
