//! Run directories `<out>/runs/<timestamp>-seed<seed>`.

use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRAIN_CACHE: &str = "train.gamf";
pub const TEST_CACHE: &str = "test.gamf";
pub const PREPARE_STAMP: &str = "prepare.stamp";
pub const REPORT_FILE: &str = "report.txt";

fn runs_root(out: &Path) -> PathBuf {
    out.join("runs")
}

fn timestamp() -> String {
    chrono::Local::now().format("%Y%m%dT%H%M%S").to_string()
}

/// The most recent run for `seed`, by name (timestamps sort lexically).
pub fn latest_run(out: &Path, seed: u64) -> Option<PathBuf> {
    let suffix = format!("-seed{seed}");
    let entries = std::fs::read_dir(runs_root(out)).ok()?;
    entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|name| name.ends_with(&suffix))
        .max()
        .map(|name| runs_root(out).join(name))
}

/// A fresh run directory; a numeric suffix avoids clashing within one second.
pub fn create_run(out: &Path, seed: u64) -> std::io::Result<PathBuf> {
    let stamp = timestamp();
    let root = runs_root(out);
    std::fs::create_dir_all(&root)?;
    let mut dir = root.join(format!("{stamp}-seed{seed}"));
    let mut k = 1;
    while dir.exists() {
        dir = root.join(format!("{stamp}_{k}-seed{seed}"));
        k += 1;
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
