use super::network::{patches_to_tensor, Network};
use crate::dsp::GamPatch;
use crate::error::{Error, Result};
use crate::ingest::NUM_CLASSES;
use crate::neural::ArchTag;

/// A trained patch classifier: the C-DNN, or a frozen encoder with its head.
pub enum Classifier {
    Cdnn(Network),
    EncoderMlp { encoder: Network, mlp: Network },
}

impl Classifier {
    /// Per-patch class probabilities in inference mode.
    pub fn patch_probabilities(&mut self, patches: &[GamPatch]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        if patches.is_empty() {
            return Ok(Vec::new());
        }
        let x = patches_to_tensor(patches)?;
        let probs = match self {
            Classifier::Cdnn(net) => {
                expect(net, ArchTag::Cdnn)?;
                net.predict(&x)?
            }
            Classifier::EncoderMlp { encoder, mlp } => {
                expect(encoder, ArchTag::Encoder)?;
                expect(mlp, ArchTag::Mlp)?;
                let z = encoder.predict(&x)?;
                mlp.predict(&z)?
            }
        };
        Ok(probs
            .data()
            .chunks_exact(NUM_CLASSES)
            .map(|r| std::array::from_fn(|k| r[k] as f64))
            .collect())
    }
}

fn expect(net: &Network, kind: ArchTag) -> Result<()> {
    if net.kind == kind {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "expected a {kind:?} network, got {:?}",
            net.kind
        )))
    }
}

/// Arithmetic mean of per-patch probability vectors.
pub fn mean_probabilities(per_patch: &[[f64; NUM_CLASSES]]) -> Result<[f64; NUM_CLASSES]> {
    if per_patch.is_empty() {
        return Err(Error::invalid("a cycle needs at least one patch"));
    }
    let mut mean = [0.0; NUM_CLASSES];
    for p in per_patch {
        for k in 0..NUM_CLASSES {
            mean[k] += p[k];
        }
    }
    Ok(mean.map(|s| s / per_patch.len() as f64))
}

pub fn cycle_probabilities(
    model: &mut Classifier,
    patches: &[GamPatch],
) -> Result<[f64; NUM_CLASSES]> {
    mean_probabilities(&model.patch_probabilities(patches)?)
}

/// Cycle-level probabilities for many patches, grouped by cycle id in order
/// of first appearance.
pub fn predict_cycles(
    model: &mut Classifier,
    patches: &[GamPatch],
) -> Result<Vec<(String, [f64; NUM_CLASSES])>> {
    let per_patch = model.patch_probabilities(patches)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<[f64; NUM_CLASSES]>> = Default::default();
    for (patch, probs) in patches.iter().zip(per_patch) {
        let entry = groups.entry(patch.cycle_id.as_str()).or_default();
        if entry.is_empty() {
            order.push(patch.cycle_id.clone());
        }
        entry.push(probs);
    }
    order
        .into_iter()
        .map(|id| {
            let p = mean_probabilities(&groups[id.as_str()])?;
            Ok((id, p))
        })
        .collect()
}
