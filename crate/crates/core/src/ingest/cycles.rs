use std::collections::{BTreeSet, HashMap};

use super::annotation::CycleAnnotation;
use super::audio::Recording;
use super::label::{label_of, CycleLabel, Subset};
use crate::error::{Error, Result};

/// Offsets may overshoot the end of the recording by this much and are
/// clamped; anything further is an annotation error.
pub const OFFSET_TOLERANCE_S: f64 = 0.05;

/// One labelled respiratory cycle cut from a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioCycle {
    /// `<recording stem>#<zero-based index>`.
    pub cycle_id: String,
    pub recording_id: String,
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub label: CycleLabel,
    pub subset: Option<Subset>,
}

impl AudioCycle {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub fn cycle_id(recording: &str, index: usize) -> String {
    format!("{recording}#{index}")
}

/// Slices `[round(onset * rate), round(offset * rate))` for each annotation.
pub fn extract_cycles(
    recording: &Recording,
    annotations: &[CycleAnnotation],
) -> Result<Vec<AudioCycle>> {
    let rate = recording.sample_rate as f64;
    let len = recording.samples.len();
    let duration = recording.duration_s();
    let fail = |message: String| Error::Recording {
        recording: recording.id.clone(),
        message,
    };
    annotations
        .iter()
        .enumerate()
        .map(|(index, ann)| {
            if ann.offset_s > duration + OFFSET_TOLERANCE_S {
                return Err(fail(format!(
                    "cycle {index} ends at {:.3} s but the recording lasts {duration:.3} s",
                    ann.offset_s
                )));
            }
            let start = ((ann.onset_s * rate).round() as usize).min(len);
            let end = ((ann.offset_s * rate).round() as usize).min(len);
            if end <= start {
                return Err(fail(format!("cycle {index} is empty after slicing")));
            }
            Ok(AudioCycle {
                cycle_id: cycle_id(&recording.id, index),
                recording_id: recording.id.clone(),
                samples: recording.samples[start..end].to_vec(),
                sample_rate: recording.sample_rate,
                label: label_of(ann.crackle, ann.wheeze),
                subset: None,
            })
        })
        .collect()
}

/// Recording-level train/test assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitTable {
    map: HashMap<String, Subset>,
}

impl SplitTable {
    pub fn get(&self, recording: &str) -> Option<Subset> {
        self.map.get(recording).copied()
    }

    pub fn insert(&mut self, recording: impl Into<String>, subset: Subset) {
        self.map.insert(recording.into(), subset);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Parses the official split listing: `<stem>\t{train|test}` per line.
pub fn parse_split_file(text: &str) -> Result<SplitTable> {
    let mut table = SplitTable::default();
    for (idx, raw) in text.lines().enumerate() {
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [stem, subset] => {
                let subset = subset.parse::<Subset>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
                table.insert(*stem, subset);
            }
            _ => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "expected `<recording>\\t<train|test>`".into(),
                })
            }
        }
    }
    Ok(table)
}

/// Partitions cycles by their recording's subset. Every recording must be
/// listed; the error names all that are not.
pub fn official_split(
    cycles: Vec<AudioCycle>,
    table: &SplitTable,
) -> Result<(Vec<AudioCycle>, Vec<AudioCycle>)> {
    let missing: BTreeSet<&str> = cycles
        .iter()
        .filter(|c| table.get(&c.recording_id).is_none())
        .map(|c| c.recording_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSplit(
            missing.into_iter().map(String::from).collect(),
        ));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut cycle in cycles {
        let subset = table.get(&cycle.recording_id).expect("checked above");
        cycle.subset = Some(subset);
        match subset {
            Subset::Train => train.push(cycle),
            Subset::Test => test.push(cycle),
        }
    }
    Ok((train, test))
}

/// Number of cycles per class, in [`CycleLabel::ALL`] order.
pub fn class_counts<'a>(labels: impl IntoIterator<Item = &'a CycleLabel>) -> [usize; 4] {
    let mut counts = [0; 4];
    for l in labels {
        counts[l.index()] += 1;
    }
    counts
}
