use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// The four respiratory cycle classes, in probability-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CycleLabel {
    Crackle = 0,
    Wheeze = 1,
    Both = 2,
    Normal = 3,
}

pub const NUM_CLASSES: usize = 4;

impl CycleLabel {
    pub const ALL: [CycleLabel; NUM_CLASSES] = [
        CycleLabel::Crackle,
        CycleLabel::Wheeze,
        CycleLabel::Both,
        CycleLabel::Normal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CycleLabel::Crackle => "Crackle",
            CycleLabel::Wheeze => "Wheeze",
            CycleLabel::Both => "Both",
            CycleLabel::Normal => "Normal",
        }
    }

    /// Is this one of the adventitious (non-Normal) classes?
    pub fn is_anomalous(self) -> bool {
        self != CycleLabel::Normal
    }
}

/// Maps the crackle/wheeze annotation flags to a class.
pub fn label_of(crackle: bool, wheeze: bool) -> CycleLabel {
    match (crackle, wheeze) {
        (true, false) => CycleLabel::Crackle,
        (false, true) => CycleLabel::Wheeze,
        (true, true) => CycleLabel::Both,
        (false, false) => CycleLabel::Normal,
    }
}

impl fmt::Display for CycleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CycleLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown class label {s:?}")))
    }
}

/// Train/test membership of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subset {
    Train,
    Test,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Test => "test",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Subset::Train),
            "test" => Ok(Subset::Test),
            other => Err(Error::invalid(format!("unknown subset {other:?}"))),
        }
    }
}
