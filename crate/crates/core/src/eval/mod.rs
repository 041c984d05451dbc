//! Late fusion, confusion matrices and ICBHI scores.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::{CycleLabel, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Cdnn,
    Mlp,
    Fused,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Cdnn => "CDNN",
            Source::Mlp => "MLP",
            Source::Fused => "Fused",
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cdnn" => Ok(Source::Cdnn),
            "mlp" => Ok(Source::Mlp),
            "fused" => Ok(Source::Fused),
            _ => Err(Error::invalid(format!("unknown probability source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleProbability {
    pub cycle_id: String,
    /// Ordered Crackle, Wheeze, Both, Normal.
    pub probs: [f64; NUM_CLASSES],
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Max,
    Mean,
    Mul,
}

impl Fusion {
    pub fn name(self) -> &'static str {
        match self {
            Fusion::Max => "max",
            Fusion::Mean => "mean",
            Fusion::Mul => "mul",
        }
    }
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(Fusion::Max),
            "mean" => Ok(Fusion::Mean),
            "mul" => Ok(Fusion::Mul),
            _ => Err(Error::Config(format!(
                "unknown fusion scheme {s:?} (max, mean or mul)"
            ))),
        }
    }
}

/// Combines two classifiers' outputs for one cycle. `Mul` keeps the factor
/// of one half and neither `Max` nor `Mul` is renormalized.
pub fn fuse(
    p1: &CycleProbability,
    p2: &CycleProbability,
    scheme: Fusion,
) -> Result<CycleProbability> {
    if p1.cycle_id != p2.cycle_id {
        return Err(Error::invalid(format!(
            "cannot fuse {} with {}",
            p1.cycle_id, p2.cycle_id
        )));
    }
    let probs = std::array::from_fn(|k| {
        let (a, b) = (p1.probs[k], p2.probs[k]);
        match scheme {
            Fusion::Max => a.max(b),
            Fusion::Mean => (a + b) / 2.0,
            Fusion::Mul => a * b / 2.0,
        }
    });
    Ok(CycleProbability {
        cycle_id: p1.cycle_id.clone(),
        probs,
        source: Source::Fused,
    })
}

/// Arg-max class; ties resolve to the earliest class.
pub fn decide(probs: &[f64; NUM_CLASSES]) -> Result<CycleLabel> {
    if probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid(format!(
            "{probs:?} has negative or NaN entries"
        )));
    }
    if probs.iter().all(|&p| p == 0.0) {
        return Err(Error::invalid(
            "cannot decide on an all-zero probability vector",
        ));
    }
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    Ok(CycleLabel::from_index(best).expect("class index"))
}

/// Counts indexed `[predicted][true]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix4 {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix4 {
    pub fn get(&self, predicted: CycleLabel, truth: CycleLabel) -> u64 {
        self.counts[predicted.index()][truth.index()]
    }

    /// Per-true-class totals.
    pub fn column_totals(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|t| self.counts.iter().map(|row| row[t]).sum())
    }

    pub fn total(&self) -> u64 {
        self.column_totals().iter().sum()
    }
}

fn index_unique(items: &[(String, CycleLabel)], what: &str) -> Result<HashMap<String, CycleLabel>> {
    let mut map = HashMap::with_capacity(items.len());
    for (id, label) in items {
        if map.insert(id.clone(), *label).is_some() {
            return Err(Error::invalid(format!("duplicate cycle id {id} in {what}")));
        }
    }
    Ok(map)
}

pub fn confusion(
    pred: &[(String, CycleLabel)],
    truth: &[(String, CycleLabel)],
) -> Result<ConfusionMatrix4> {
    let pred_map = index_unique(pred, "predictions")?;
    let truth_map = index_unique(truth, "ground truth")?;
    let mut m = ConfusionMatrix4::default();
    let mut missing: Vec<&str> = Vec::new();
    for (id, t) in &truth_map {
        match pred_map.get(id) {
            Some(p) => m.counts[p.index()][t.index()] += 1,
            None => missing.push(id),
        }
    }
    let mut extra: Vec<&str> = pred_map
        .keys()
        .filter(|id| !truth_map.contains_key(*id))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort_unstable();
        extra.sort_unstable();
        return Err(Error::invalid(format!(
            "prediction and truth ids differ (no prediction: {:?}; no truth: {:?})",
            &missing[..missing.len().min(5)],
            &extra[..extra.len().min(5)]
        )));
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcbhiScores {
    pub se: f64,
    pub sp: f64,
    pub as_score: f64,
    pub hs: f64,
}

impl IcbhiScores {
    pub fn from_se_sp(se: f64, sp: f64) -> Self {
        let hs = if se + sp == 0.0 {
            0.0
        } else {
            2.0 * se * sp / (se + sp)
        };
        Self {
            se,
            sp,
            as_score: (se + sp) / 2.0,
            hs,
        }
    }
}

pub fn icbhi_scores(m: &ConfusionMatrix4) -> Result<IcbhiScores> {
    let totals = m.column_totals();
    let anomalous: u64 = totals[..3].iter().sum();
    let normal = totals[3];
    if anomalous == 0 || normal == 0 {
        return Err(Error::invalid(
            "scores need both anomalous and normal cycles in the truth",
        ));
    }
    let hits: u64 = (0..3).map(|k| m.counts[k][k]).sum();
    Ok(IcbhiScores::from_se_sp(
        hits as f64 / anomalous as f64,
        m.counts[3][3] as f64 / normal as f64,
    ))
}

pub const PROBABILITY_HEADER: [&str; 6] = [
    "cycle_id",
    "p_crackle",
    "p_wheeze",
    "p_both",
    "p_normal",
    "source",
];

pub fn write_probabilities(
    mut w: impl Write,
    rows: &[CycleProbability],
    preamble: &[String],
) -> Result<()> {
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(PROBABILITY_HEADER)?;
    for r in rows {
        let mut rec = vec![r.cycle_id.clone()];
        rec.extend(r.probs.iter().map(|p| format!("{p:.8e}")));
        rec.push(r.source.name().to_string());
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_probabilities(r: impl Read) -> Result<Vec<CycleProbability>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header = reader.headers()?.clone();
    if header.iter().ne(PROBABILITY_HEADER) {
        return Err(Error::Format {
            kind: "probability",
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        let field = |k: usize| -> Result<f64> {
            rec[k].trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("{} = {:?} is not a number", PROBABILITY_HEADER[k], &rec[k]),
            })
        };
        out.push(CycleProbability {
            cycle_id: rec[0].to_string(),
            probs: [field(1)?, field(2)?, field(3)?, field(4)?],
            source: rec[5].parse().map_err(|e: Error| Error::Parse {
                line,
                message: e.to_string(),
            })?,
        });
    }
    Ok(out)
}

/// Score block plus the matrix laid out with predicted rows and true columns.
pub struct Report<'a> {
    pub title: &'a str,
    pub scores: IcbhiScores,
    pub matrix: ConfusionMatrix4,
}

impl fmt::Display for Report<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.scores;
        writeln!(f, "[{}]", self.title)?;
        writeln!(f, "SE {:.4}", s.se)?;
        writeln!(f, "SP {:.4}", s.sp)?;
        writeln!(f, "AS {:.4}", s.as_score)?;
        writeln!(f, "HS {:.4}", s.hs)?;
        writeln!(f)?;
        write!(f, "{:>12}", "pred \\ true")?;
        for c in CycleLabel::ALL {
            write!(f, "{:>9}", c.name())?;
        }
        writeln!(f)?;
        for p in CycleLabel::ALL {
            write!(f, "{:>12}", p.name())?;
            for t in CycleLabel::ALL {
                write!(f, "{:>9}", self.matrix.get(p, t))?;
            }
            writeln!(f)?;
        }
        write!(f, "{:>12}", "total")?;
        for t in self.matrix.column_totals() {
            write!(f, "{t:>9}")?;
        }
        writeln!(f)
    }
}
