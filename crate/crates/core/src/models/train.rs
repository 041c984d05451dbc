use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{patches_to_tensor, Network};
use crate::augment::{mixup_batch, oversample_balance, SoftLabel, DEFAULT_ALPHA};
use crate::dsp::{GamPatch, LabeledPatch};
use crate::error::{Error, Result};
use crate::ingest::{CycleLabel, NUM_CLASSES};
use crate::neural::{
    add_l2_gradient, kl_divergence_loss, mse_loss, Adam, ArchTag, Context, LossConfig, Mode, Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub lambda_l2: f64,
    pub seed: u64,
    pub mixup_enabled: bool,
    pub mixup_alpha: f64,
    pub oversample_enabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: Adam::DEFAULT_LR,
            batch: 50,
            epochs: 100,
            lambda_l2: 1e-4,
            seed: 0,
            mixup_enabled: true,
            mixup_alpha: DEFAULT_ALPHA,
            oversample_enabled: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch < 2 {
            return Err(Error::Config(
                "train.batch must be at least 2 (batch normalization)".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.lambda_l2 >= 0.0) || !(self.mixup_alpha > 0.0) {
            return Err(Error::Config(
                "train.lr and mixup.alpha must be positive, train.lambda_l2 non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sample objective over the epoch's batches.
    pub loss: f64,
    /// Fraction of samples whose predicted argmax matched the target argmax.
    pub train_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    pub fn write_csv(&self, mut w: impl Write, preamble: &[String]) -> Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "epoch,loss,train_acc")?;
        for e in &self.epochs {
            match e.train_acc {
                Some(acc) => writeln!(w, "{},{:.6},{:.4}", e.epoch, e.loss, acc)?,
                None => writeln!(w, "{},{:.6},", e.epoch, e.loss)?,
            }
        }
        Ok(())
    }
}

/// Items of one shape with class labels, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub item_shape: Vec<usize>,
    pub data: Vec<f32>,
    pub labels: Vec<CycleLabel>,
}

impl LabeledSet {
    pub fn new(item_shape: &[usize], data: Vec<f32>, labels: Vec<CycleLabel>) -> Result<Self> {
        let d: usize = item_shape.iter().product();
        if data.len() != d * labels.len() {
            return Err(Error::shape(format!(
                "{} values for {} items of shape {item_shape:?}",
                data.len(),
                labels.len()
            )));
        }
        Ok(Self {
            item_shape: item_shape.to_vec(),
            data,
            labels,
        })
    }

    pub fn from_patches(patches: &[LabeledPatch]) -> Result<Self> {
        let x = patches_to_tensor(patches.iter().map(|p| &p.patch))?;
        let labels = patches.iter().map(|p| p.label).collect();
        let shape = x.shape()[1..].to_vec();
        Self::new(&shape, x.into_vec(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn item_len(&self) -> usize {
        self.item_shape.iter().product()
    }

    pub fn item(&self, i: usize) -> &[f32] {
        let d = self.item_len();
        &self.data[i * d..(i + 1) * d]
    }

    fn gather(&self, idx: &[usize]) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(idx.len() * self.item_len());
        for &i in idx {
            data.extend_from_slice(self.item(i));
        }
        let mut shape = vec![idx.len()];
        shape.extend_from_slice(&self.item_shape);
        Tensor::from_vec(&shape, data)
    }
}

const SHUFFLE_STREAM: u64 = 1;
const BATCH_STREAM: u64 = 2;

/// A generator determined by `(seed, purpose, epoch, batch)`.
fn derived_rng(seed: u64, purpose: u64, epoch: usize, batch: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (i, v) in [seed, purpose, epoch as u64, batch as u64]
        .into_iter()
        .enumerate()
    {
        key[i * 8..(i + 1) * 8].copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Shuffled minibatches; a trailing batch of one is dropped because batch
/// normalization cannot train on it.
fn epoch_batches(pool: &[usize], cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut order = pool.to_vec();
    order.shuffle(&mut derived_rng(cfg.seed, SHUFFLE_STREAM, epoch, 0));
    order
        .chunks(cfg.batch)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_expected(net: &Network, kind: ArchTag) -> Result<()> {
    if net.kind != kind {
        return Err(Error::Config(format!(
            "expected a {kind:?} network, got {:?}",
            net.kind
        )));
    }
    Ok(())
}

/// KL-divergence training with optional oversampling and batch mixup.
pub fn train_classifier(
    network: &mut Network,
    set: &LabeledSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog> {
    cfg.validate()?;
    if set.len() < 2 {
        return Err(Error::invalid("training needs at least two items"));
    }
    if network.kind != ArchTag::Cdnn && network.kind != ArchTag::Mlp {
        return Err(Error::Config(format!(
            "{:?} is not a classifier",
            network.kind
        )));
    }
    network.adam.lr = cfg.lr;
    let all: Vec<usize> = (0..set.len()).collect();
    let pool = if cfg.oversample_enabled {
        oversample_balance(&all, |&i| set.labels[i], cfg.seed)?
    } else {
        all
    };
    let loss_cfg = LossConfig {
        lambda_l2: cfg.lambda_l2,
        ..LossConfig::default()
    };
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let (mut total, mut seen, mut hits) = (0.0, 0usize, 0usize);
        for (b, idx) in epoch_batches(&pool, cfg, epoch).into_iter().enumerate() {
            let mut rng = derived_rng(cfg.seed, BATCH_STREAM, epoch, b);
            let mut x = set.gather(&idx)?;
            let mut y: Vec<SoftLabel> = idx
                .iter()
                .map(|&i| SoftLabel::one_hot(set.labels[i]))
                .collect();
            if cfg.mixup_enabled {
                let (mx, my) = mixup_batch(x.data(), &y, cfg.mixup_alpha, &mut rng)?;
                x = Tensor::from_vec(x.shape(), mx)?;
                y = my;
            }
            let n = idx.len();
            let target = Tensor::from_vec(
                &[n, NUM_CLASSES],
                y.iter().flat_map(|s| s.probs.map(|p| p as f32)).collect(),
            )?;
            let mut ctx = Context::new(Mode::Train, rng);
            let yhat = network.net.forward(x, &mut ctx)?;
            let loss = kl_divergence_loss(&target, &yhat, network.net.params(), &loss_cfg)?;
            if !loss.value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            for (p, t) in yhat
                .data()
                .chunks_exact(NUM_CLASSES)
                .zip(target.data().chunks_exact(NUM_CLASSES))
            {
                hits += (argmax(p) == argmax(t)) as usize;
            }
            network.net.backward(loss.grad)?;
            add_l2_gradient(network.net.params_mut(), cfg.lambda_l2);
            network.adam.step(network.net.params_mut())?;
            network.net.zero_grad();
            total += loss.value;
            seen += n;
        }
        let entry = EpochLog {
            epoch,
            loss: total / seen.max(1) as f64,
            train_acc: Some(hits as f64 / seen.max(1) as f64),
        };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok(log)
}

pub fn train_cdnn(
    network: &mut Network,
    patches: &[LabeledPatch],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog> {
    check_expected(network, ArchTag::Cdnn)?;
    if patches.is_empty() {
        return Err(Error::invalid("no training patches"));
    }
    train_classifier(network, &LabeledSet::from_patches(patches)?, cfg, on_epoch)
}

/// Reconstruction training of encoder and decoder jointly on unmixed patches.
pub fn train_autoencoder(
    encoder: &mut Network,
    decoder: &mut Network,
    patches: &[GamPatch],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog> {
    cfg.validate()?;
    check_expected(encoder, ArchTag::Encoder)?;
    check_expected(decoder, ArchTag::Decoder)?;
    if patches.len() < 2 {
        return Err(Error::invalid("training needs at least two patches"));
    }
    encoder.adam.lr = cfg.lr;
    decoder.adam.lr = cfg.lr;
    let x_all = patches_to_tensor(patches)?;
    let shape = x_all.shape()[1..].to_vec();
    let set = LabeledSet::new(
        &shape,
        x_all.into_vec(),
        vec![CycleLabel::Normal; patches.len()],
    )?;
    let pool: Vec<usize> = (0..set.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let (mut total, mut seen) = (0.0, 0usize);
        for (b, idx) in epoch_batches(&pool, cfg, epoch).into_iter().enumerate() {
            let x = set.gather(&idx)?;
            let mut ctx = Context::new(Mode::Train, derived_rng(cfg.seed, BATCH_STREAM, epoch, b));
            let z = encoder.net.forward(x.clone(), &mut ctx)?;
            let xhat = decoder.net.forward(z, &mut ctx)?;
            let loss = mse_loss(&x, &xhat)?;
            if !loss.value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let dz = decoder.net.backward(loss.grad)?;
            encoder.net.backward(dz)?;
            decoder.adam.step(decoder.net.params_mut())?;
            encoder.adam.step(encoder.net.params_mut())?;
            decoder.net.zero_grad();
            encoder.net.zero_grad();
            total += loss.value;
            seen += 1;
        }
        let entry = EpochLog {
            epoch,
            loss: total / seen.max(1) as f64,
            train_acc: None,
        };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok(log)
}

/// Inference-mode embeddings `[N, E]` for a set of patches.
pub fn embed(encoder: &mut Network, patches: &[GamPatch]) -> Result<Tensor<f32>> {
    check_expected(encoder, ArchTag::Encoder)?;
    encoder.predict(&patches_to_tensor(patches)?)
}

/// Trains the head on precomputed embeddings; mixup mixes embedding vectors.
pub fn train_mlp_head(
    mlp: &mut Network,
    embeddings: &LabeledSet,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog> {
    check_expected(mlp, ArchTag::Mlp)?;
    if embeddings.item_shape != [mlp.arch.embedding_width()] {
        return Err(Error::shape(format!(
            "embeddings of shape {:?} for a head expecting {}",
            embeddings.item_shape,
            mlp.arch.embedding_width()
        )));
    }
    train_classifier(mlp, embeddings, cfg, on_epoch)
}

/// Inference-mode accuracy of a classifier on a labelled set.
pub fn accuracy(network: &mut Network, set: &LabeledSet) -> Result<f64> {
    let all: Vec<usize> = (0..set.len()).collect();
    let probs = network.predict(&set.gather(&all)?)?;
    let hits = probs
        .data()
        .chunks_exact(NUM_CLASSES)
        .zip(&set.labels)
        .filter(|(p, l)| argmax(p) == l.index())
        .count();
    Ok(hits as f64 / set.len().max(1) as f64)
}
