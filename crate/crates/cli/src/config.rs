//! Flat `key = value` pipeline configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lungnet_core::{ArchConfig, FrontEndConfig, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data_dir: Option<PathBuf>,
    pub split_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub frontend: FrontEndConfig,
    pub train: TrainConfig,
    pub arch: ArchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            split_file: None,
            out_dir: PathBuf::from("out"),
            frontend: FrontEndConfig::default(),
            train: TrainConfig::default(),
            arch: ArchConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "data.dir",
    "data.split",
    "out.dir",
    "seed",
    "frontend.target_rate",
    "frontend.cycle_duration_s",
    "frontend.band_low_hz",
    "frontend.band_high_hz",
    "frontend.fft_size",
    "frontend.window_s",
    "frontend.hop_s",
    "frontend.n_gammatone",
    "frontend.patch_time",
    "train.lr",
    "train.batch",
    "train.epochs",
    "train.lambda_l2",
    "mixup.enabled",
    "mixup.alpha",
    "oversample.enabled",
    "arch.conv_channels",
    "arch.dense_width",
    "arch.decoder_seed_channels",
    "arch.decoder_channels",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot parse {value:?}")))
}

fn parse_four(key: &str, value: &str) -> Result<[usize; 4], CliError> {
    let parts: Vec<usize> = value
        .split(',')
        .map(|p| parse(key, p.trim()))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| CliError::Usage(format!("{key}: expected four comma-separated widths")))
}

fn join(v: [usize; 4]) -> String {
    v.map(|x| x.to_string()).join(",")
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        let fe = &mut self.frontend;
        let tr = &mut self.train;
        match key.trim() {
            "data.dir" => self.data_dir = opt_path(v),
            "data.split" => self.split_file = opt_path(v),
            "out.dir" => self.out_dir = PathBuf::from(v),
            "seed" => tr.seed = parse(key, v)?,
            "frontend.target_rate" => fe.target_rate = parse(key, v)?,
            "frontend.cycle_duration_s" => fe.cycle_duration_s = parse(key, v)?,
            "frontend.band_low_hz" => fe.band_low_hz = parse(key, v)?,
            "frontend.band_high_hz" => fe.band_high_hz = parse(key, v)?,
            "frontend.fft_size" => fe.fft_size = parse(key, v)?,
            "frontend.window_s" => fe.window_s = parse(key, v)?,
            "frontend.hop_s" => fe.hop_s = parse(key, v)?,
            "frontend.n_gammatone" => fe.n_gammatone = parse(key, v)?,
            "frontend.patch_time" => fe.patch_time = parse(key, v)?,
            "train.lr" => tr.lr = parse(key, v)?,
            "train.batch" => tr.batch = parse(key, v)?,
            "train.epochs" => tr.epochs = parse(key, v)?,
            "train.lambda_l2" => tr.lambda_l2 = parse(key, v)?,
            "mixup.enabled" => tr.mixup_enabled = parse(key, v)?,
            "mixup.alpha" => tr.mixup_alpha = parse(key, v)?,
            "oversample.enabled" => tr.oversample_enabled = parse(key, v)?,
            "arch.conv_channels" => self.arch.conv_channels = parse_four(key, v)?,
            "arch.dense_width" => self.arch.dense_width = parse(key, v)?,
            "arch.decoder_seed_channels" => self.arch.decoder_seed_channels = parse(key, v)?,
            "arch.decoder_channels" => self.arch.decoder_channels = parse_four(key, v)?,
            other => return Err(CliError::Usage(format!("unknown config key {other:?}"))),
        }
        self.sync_arch();
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set expects key=value, got {assignment:?}"))
        })?;
        self.set(k, v)
    }

    /// Applies every assignment in a config file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| CliError::Usage(format!("line {}: {}", i + 1, e)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    fn sync_arch(&mut self) {
        self.arch.input_h = self.frontend.n_gammatone;
        self.arch.input_w = self.frontend.patch_time;
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let fe = &self.frontend;
        let tr = &self.train;
        Some(match key {
            "data.dir" => path_text(&self.data_dir),
            "data.split" => path_text(&self.split_file),
            "out.dir" => self.out_dir.display().to_string(),
            "seed" => tr.seed.to_string(),
            "frontend.target_rate" => fe.target_rate.to_string(),
            "frontend.cycle_duration_s" => fe.cycle_duration_s.to_string(),
            "frontend.band_low_hz" => fe.band_low_hz.to_string(),
            "frontend.band_high_hz" => fe.band_high_hz.to_string(),
            "frontend.fft_size" => fe.fft_size.to_string(),
            "frontend.window_s" => fe.window_s.to_string(),
            "frontend.hop_s" => fe.hop_s.to_string(),
            "frontend.n_gammatone" => fe.n_gammatone.to_string(),
            "frontend.patch_time" => fe.patch_time.to_string(),
            "train.lr" => tr.lr.to_string(),
            "train.batch" => tr.batch.to_string(),
            "train.epochs" => tr.epochs.to_string(),
            "train.lambda_l2" => tr.lambda_l2.to_string(),
            "mixup.enabled" => tr.mixup_enabled.to_string(),
            "mixup.alpha" => tr.mixup_alpha.to_string(),
            "oversample.enabled" => tr.oversample_enabled.to_string(),
            "arch.conv_channels" => join(self.arch.conv_channels),
            "arch.dense_width" => self.arch.dense_width.to_string(),
            "arch.decoder_seed_channels" => self.arch.decoder_seed_channels.to_string(),
            "arch.decoder_channels" => join(self.arch.decoder_channels),
            _ => return None,
        })
    }

    /// Every key with its resolved value, one `key = value` per entry.
    pub fn lines(&self) -> Vec<String> {
        KEYS.iter()
            .map(|k| format!("{k} = {}", self.get(k).unwrap_or_default()))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for line in self.lines() {
            let _ = writeln!(s, "{line}");
        }
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: lungnet_core::Error| CliError::Usage(e.to_string());
        self.frontend.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.arch.validate().map_err(usage)?;
        Ok(())
    }

    /// Dataset paths for `prepare`; both must exist.
    pub fn dataset_paths(&self) -> Result<(PathBuf, PathBuf), CliError> {
        let dir = self
            .data_dir
            .clone()
            .ok_or_else(|| CliError::Usage("data.dir is not set".into()))?;
        let split = self
            .split_file
            .clone()
            .ok_or_else(|| CliError::Usage("data.split is not set".into()))?;
        if !dir.is_dir() {
            return Err(CliError::Usage(format!(
                "dataset directory {} does not exist",
                dir.display()
            )));
        }
        if !split.is_file() {
            return Err(CliError::Usage(format!(
                "split file {} does not exist",
                split.display()
            )));
        }
        Ok((dir, split))
    }
}
