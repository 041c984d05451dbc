use crate::error::{Error, Result};

/// One annotated respiratory cycle inside a recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleAnnotation {
    pub onset_s: f64,
    pub offset_s: f64,
    pub crackle: bool,
    pub wheeze: bool,
}

impl CycleAnnotation {
    pub fn new(onset_s: f64, offset_s: f64, crackle: bool, wheeze: bool) -> Result<Self> {
        if !(onset_s.is_finite() && offset_s.is_finite()) || onset_s < 0.0 {
            return Err(Error::invalid(format!(
                "cycle bounds must be finite and nonnegative: {onset_s} .. {offset_s}"
            )));
        }
        if offset_s <= onset_s {
            return Err(Error::invalid(format!(
                "cycle offset {offset_s} is not after onset {onset_s}"
            )));
        }
        Ok(Self {
            onset_s,
            offset_s,
            crackle,
            wheeze,
        })
    }
}

fn parse_flag(field: &str, line: usize) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            line,
            message: format!("flag must be 0 or 1, got {other:?}"),
        }),
    }
}

/// Parses an annotation file: one `onset offset crackle wheeze` line per
/// cycle, tab or space separated. Blank lines are skipped.
pub fn parse_annotation_file(text: &str) -> Result<Vec<CycleAnnotation>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let time = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {s:?}"),
            })
        };
        let onset = time(fields[0])?;
        let offset = time(fields[1])?;
        let crackle = parse_flag(fields[2], line)?;
        let wheeze = parse_flag(fields[3], line)?;
        let ann = CycleAnnotation::new(onset, offset, crackle, wheeze).map_err(|e| match e {
            Error::Validation(message) => Error::Validation(format!("line {line}: {message}")),
            other => other,
        })?;
        out.push(ann);
    }
    Ok(out)
}

/// Writes annotations in the tab-separated on-disk layout.
pub fn serialize_annotations(annotations: &[CycleAnnotation]) -> String {
    annotations
        .iter()
        .map(|a| {
            format!(
                "{}\t{}\t{}\t{}\n",
                a.onset_s, a.offset_s, a.crackle as u8, a.wheeze as u8
            )
        })
        .collect()
}
