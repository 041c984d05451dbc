use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::annotation::parse_annotation_file;
use super::audio::read_wav;
use super::cycles::{extract_cycles, official_split, parse_split_file, AudioCycle};
use super::label::{CycleLabel, Subset};
use crate::error::{Error, Result};

/// Cycles loaded from a directory, plus the files that failed.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub cycles: Vec<AudioCycle>,
    pub failures: Vec<(PathBuf, Error)>,
}

/// Lists `<stem>.wav` files that have a `<stem>.txt` annotation next to them,
/// sorted by stem.
pub fn find_recordings(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
    let mut wavs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav"))
                && p.with_extension("txt").is_file()
        })
        .collect();
    wavs.sort();
    Ok(wavs)
}

fn load_one(wav: &Path) -> Result<Vec<AudioCycle>> {
    let txt = wav.with_extension("txt");
    let text = std::fs::read_to_string(&txt).map_err(|e| Error::file(&txt, e))?;
    let annotations = parse_annotation_file(&text).map_err(|e| Error::Recording {
        recording: txt.display().to_string(),
        message: e.to_string(),
    })?;
    let recording = read_wav(wav)?;
    extract_cycles(&recording, &annotations)
}

/// Loads every annotated recording in `dir`, in parallel per recording.
/// Output order is by recording stem then cycle index regardless of the
/// number of worker threads.
pub fn load_directory(dir: &Path) -> Result<LoadReport> {
    let wavs = find_recordings(dir)?;
    let results: Vec<(PathBuf, Result<Vec<AudioCycle>>)> = wavs
        .into_par_iter()
        .map(|p| {
            let r = load_one(&p);
            (p, r)
        })
        .collect();
    let mut report = LoadReport::default();
    for (path, result) in results {
        match result {
            Ok(cycles) => report.cycles.extend(cycles),
            Err(e) => report.failures.push((path, e)),
        }
    }
    Ok(report)
}

/// Loads a dataset directory and applies the split file.
pub fn load_split_dataset(
    dir: &Path,
    split_file: &Path,
) -> Result<(Vec<AudioCycle>, Vec<AudioCycle>)> {
    let text = std::fs::read_to_string(split_file).map_err(|e| Error::file(split_file, e))?;
    let table = parse_split_file(&text)?;
    let report = load_directory(dir)?;
    if let Some((path, err)) = report.failures.into_iter().next() {
        return Err(Error::Recording {
            recording: path.display().to_string(),
            message: err.to_string(),
        });
    }
    official_split(report.cycles, &table)
}

/// One line of the cycle manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub cycle_id: String,
    pub label: CycleLabel,
    pub subset: Subset,
    pub duration_s: f64,
}

impl ManifestRow {
    pub fn from_cycle(cycle: &AudioCycle) -> Result<Self> {
        Ok(Self {
            cycle_id: cycle.cycle_id.clone(),
            label: cycle.label,
            subset: cycle
                .subset
                .ok_or_else(|| Error::invalid(format!("{} has no subset", cycle.cycle_id)))?,
            duration_s: cycle.duration_s(),
        })
    }
}

pub const MANIFEST_HEADER: &str = "cycle_id,label,subset,duration_s";

/// Writes the manifest CSV. `preamble` lines are emitted as `#` comments.
pub fn write_manifest(mut w: impl Write, rows: &[ManifestRow], preamble: &[String]) -> Result<()> {
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{MANIFEST_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.4}",
            r.cycle_id, r.label, r.subset, r.duration_s
        )?;
    }
    Ok(())
}

pub fn read_manifest(r: impl std::io::Read) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |k: usize| {
            record.get(k).ok_or_else(|| Error::Parse {
                line,
                message: "manifest row has fewer than 4 fields".into(),
            })
        };
        let parse_err = |e: Error| Error::Parse {
            line,
            message: e.to_string(),
        };
        rows.push(ManifestRow {
            cycle_id: field(0)?.to_string(),
            label: field(1)?.parse().map_err(parse_err)?,
            subset: field(2)?.parse().map_err(parse_err)?,
            duration_s: field(3)?.parse().map_err(|_| Error::Parse {
                line,
                message: "bad duration".into(),
            })?,
        });
    }
    Ok(rows)
}
