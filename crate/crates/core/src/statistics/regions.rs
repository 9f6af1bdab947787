use std::fmt;
use std::str::FromStr;

use crate::dataset::LabelMap;
use crate::error::{Error, Result};

/// Evaluation region derived from a label map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionKind {
    /// Contrast-enhancing tumor: label 4.
    Ce,
    /// Tumor core: labels 1 and 4.
    Core,
    /// Whole tumor: labels 1, 2 and 4.
    Whole,
}

impl RegionKind {
    pub const ALL: [RegionKind; 3] = [RegionKind::Ce, RegionKind::Core, RegionKind::Whole];

    pub fn labels(self) -> &'static [u8] {
        match self {
            RegionKind::Ce => &[4],
            RegionKind::Core => &[1, 4],
            RegionKind::Whole => &[1, 2, 4],
        }
    }

    pub fn contains(self, label: u8) -> bool {
        self.labels().contains(&label)
    }

    /// Identifier used in CSV files.
    pub fn as_str(self) -> &'static str {
        match self {
            RegionKind::Ce => "CE",
            RegionKind::Core => "CORE",
            RegionKind::Whole => "WHOLE",
        }
    }

    /// Column heading used in the report table.
    pub fn title(self) -> &'static str {
        match self {
            RegionKind::Ce => "CE",
            RegionKind::Core => "Core",
            RegionKind::Whole => "Tumor",
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CE" => Ok(RegionKind::Ce),
            "CORE" => Ok(RegionKind::Core),
            "WHOLE" | "TUMOR" => Ok(RegionKind::Whole),
            _ => Err(Error::format("region", format!("unknown region {s:?}"))),
        }
    }
}

pub fn region_mask(labels: &LabelMap, region: RegionKind) -> Vec<bool> {
    labels_mask(labels.labels(), region)
}

pub(crate) fn labels_mask(labels: &[u8], region: RegionKind) -> Vec<bool> {
    labels.iter().map(|&l| region.contains(l)).collect()
}

/// `2|A∩B| / (|A|+|B|)`, with 1.0 when both masks are empty.
pub fn dice(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("mask of {} pixels", truth.len()), format!("{} pixels", pred.len())));
    }
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        inter += (p && t) as usize;
        a += p as usize;
        b += t as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (a + b) as f64)
}
