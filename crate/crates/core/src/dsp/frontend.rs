use super::cache;
use super::config::FrontEndConfig;
use super::filter::HighPass;
use super::gammatone::{gam_spectrogram, gammatone_weight_matrix, GammatoneWeights};
use super::patch::{patchify, GamPatch, LabeledPatch};
use super::resample::resample;
use super::stft::Stft;
use crate::error::{Error, Result};
use crate::ingest::AudioCycle;

pub const HIGHPASS_ORDER: usize = 4;

/// Resamples a cycle to `target_rate`.
pub fn resample_cycle(cycle: &AudioCycle, target_rate: u32) -> AudioCycle {
    AudioCycle {
        samples: resample(&cycle.samples, cycle.sample_rate, target_rate),
        sample_rate: target_rate,
        ..cycle.clone()
    }
}

/// Repeats `samples` end to end until `len` samples are filled.
pub fn tile_to_length(samples: &[f32], len: usize) -> Result<Vec<f32>> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot tile an empty cycle"));
    }
    Ok(samples.iter().copied().cycle().take(len).collect())
}

/// Tiles/truncates to the fixed cycle duration, then high-passes at
/// `band_low`. The upper band edge coincides with Nyquist at the target rate.
pub fn prepare_cycle(cycle: &AudioCycle, cfg: &FrontEndConfig) -> Result<AudioCycle> {
    if cycle.sample_rate != cfg.target_rate {
        return Err(Error::invalid(format!(
            "{} is at {} Hz, expected {} Hz",
            cycle.cycle_id, cycle.sample_rate, cfg.target_rate
        )));
    }
    let tiled = tile_to_length(&cycle.samples, cfg.cycle_len())
        .map_err(|_| Error::invalid(format!("{} has no samples", cycle.cycle_id)))?;
    let hp = HighPass::butterworth(HIGHPASS_ORDER, cfg.band_low_hz, cfg.target_rate as f64);
    Ok(AudioCycle {
        samples: hp.apply(&tiled),
        ..cycle.clone()
    })
}

/// The full cycle-to-patches transform with its weights built once.
pub struct FrontEnd {
    cfg: FrontEndConfig,
    weights: GammatoneWeights,
    stft: Stft,
}

impl FrontEnd {
    pub fn new(cfg: FrontEndConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            weights: gammatone_weight_matrix(&cfg)?,
            stft: Stft::new(&cfg),
            cfg,
        })
    }

    pub fn config(&self) -> &FrontEndConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &GammatoneWeights {
        &self.weights
    }

    pub fn patches(&self, cycle: &AudioCycle) -> Result<Vec<GamPatch>> {
        let resampled = resample_cycle(cycle, self.cfg.target_rate);
        let prepared = prepare_cycle(&resampled, &self.cfg)?;
        let spec = self.stft.process(&prepared.samples)?;
        let gam = gam_spectrogram(&spec, &self.weights)?;
        Ok(patchify(&gam, &cycle.cycle_id, &self.cfg))
    }

    pub fn labeled_patches(&self, cycle: &AudioCycle) -> Result<Vec<LabeledPatch>> {
        Ok(self
            .patches(cycle)?
            .into_iter()
            .map(|patch| LabeledPatch {
                patch,
                label: cycle.label,
            })
            .collect())
    }

    /// Extracts patches for many cycles in parallel; output keeps input order.
    pub fn extract_all(&self, cycles: &[AudioCycle]) -> Result<Vec<LabeledPatch>> {
        use rayon::prelude::*;
        let per_cycle: Vec<Result<Vec<LabeledPatch>>> =
            cycles.par_iter().map(|c| self.labeled_patches(c)).collect();
        let mut out = Vec::new();
        for r in per_cycle {
            out.extend(r?);
        }
        Ok(out)
    }

    pub fn load_cache(&self, path: &std::path::Path) -> Result<Vec<LabeledPatch>> {
        cache::load_cache(path, self.cfg.n_gammatone, self.cfg.patch_time)
    }
}
