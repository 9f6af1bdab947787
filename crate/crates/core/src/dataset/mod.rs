//! Subjects, the synthetic two-grade phantom cohort, grade stratification and
//! grade-channel injection.

mod io;
mod phantom;

pub(crate) mod io_util {
    pub(crate) use super::io::{parse_key_values, write};
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_cohort, load_subject, read_cohort_manifest, save_cohort, save_subject, CohortEntry, COHORT_MANIFEST,
};
pub use phantom::{generate_cohort, generate_phantom, PhantomConfig};

/// Tumor grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    #[serde(rename = "LGG")]
    Lgg,
    #[serde(rename = "HGG")]
    Hgg,
}

impl Grade {
    pub const ALL: [Grade; 2] = [Grade::Hgg, Grade::Lgg];

    pub fn as_str(self) -> &'static str {
        match self {
            Grade::Lgg => "LGG",
            Grade::Hgg => "HGG",
        }
    }

    /// Value of the constant plane appended by [`inject_grade_channel`].
    pub fn injection_value(self) -> f32 {
        match self {
            Grade::Lgg => 0.0,
            Grade::Hgg => 1.0,
        }
    }

    pub fn flipped(self) -> Grade {
        match self {
            Grade::Lgg => Grade::Hgg,
            Grade::Hgg => Grade::Lgg,
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LGG" => Ok(Grade::Lgg),
            "HGG" => Ok(Grade::Hgg),
            other => Err(Error::format("grade", format!("unknown grade {other:?}"))),
        }
    }
}

/// Multi-channel 2D image, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::shape("nonzero channels, height and width", format!("{channels}x{height}x{width}")));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::shape(
                format!("{expected} values for {channels}x{height}x{width}"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format("image", format!("non-finite value at index {i}")));
        }
        Ok(Volume { channels, height, width, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Integer class map in the usual glioma labelling convention: 0 background, 1 necrosis /
/// non-enhancing core, 2 edema, 4 enhancing tumor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

/// Label values allowed in a [`LabelMap`].
pub const LABEL_VALUES: [u8; 4] = [0, 1, 2, 4];

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape(
                format!("{} labels for {height}x{width}", height * width),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|v| !LABEL_VALUES.contains(v)) {
            return Err(Error::format("labels", format!("illegal label value {bad}")));
        }
        Ok(LabelMap { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// One case of the cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub grade: Grade,
    pub volume: Volume,
    pub labels: LabelMap,
}

impl Subject {
    pub fn new(id: String, grade: Grade, volume: Volume, labels: LabelMap) -> Result<Self> {
        if id.is_empty() || id.contains(['\t', '\n', '/', ',']) {
            return Err(Error::format("id", format!("invalid subject id {id:?}")));
        }
        if volume.height() != labels.height() || volume.width() != labels.width() {
            return Err(Error::shape(
                format!("labels {}x{}", volume.height(), volume.width()),
                format!("labels {}x{}", labels.height(), labels.width()),
            ));
        }
        Ok(Subject { id, grade, volume, labels })
    }
}

/// Splits a cohort by grade, preserving order within each part.
pub fn stratify(cohort: &[Subject]) -> (Vec<&Subject>, Vec<&Subject>) {
    cohort.iter().partition(|s| s.grade == Grade::Hgg)
}

/// Appends a constant plane encoding `grade` (0.0 for LGG, 1.0 for HGG).
/// The original planes are copied unchanged.
pub fn inject_grade_channel(volume: &Volume, grade: Grade) -> Volume {
    let plane = volume.height * volume.width;
    let mut data = Vec::with_capacity(volume.data.len() + plane);
    data.extend_from_slice(&volume.data);
    data.resize(volume.data.len() + plane, grade.injection_value());
    Volume { channels: volume.channels + 1, height: volume.height, width: volume.width, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(channels: usize, h: usize, w: usize) -> Volume {
        let data = (0..channels * h * w).map(|i| (i as f32 * 0.37).sin()).collect();
        Volume::new(channels, h, w, data).unwrap()
    }

    #[test]
    fn injection_appends_constant_plane() {
        let v = volume(4, 64, 64);
        let hgg = inject_grade_channel(&v, Grade::Hgg);
        assert_eq!(hgg.channels(), 5);
        assert!(hgg.plane(4).iter().all(|&x| x == 1.0));
        let lgg = inject_grade_channel(&v, Grade::Lgg);
        assert!(lgg.plane(4).iter().all(|&x| x == 0.0));
        for c in 0..4 {
            let before: Vec<u32> = v.plane(c).iter().map(|x| x.to_bits()).collect();
            let after: Vec<u32> = hgg.plane(c).iter().map(|x| x.to_bits()).collect();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn label_map_rejects_value_three() {
        let err = LabelMap::new(1, 3, vec![0, 3, 4]).unwrap_err();
        assert!(err.to_string().contains("illegal label value 3"), "{err}");
    }

    #[test]
    fn volume_rejects_wrong_length_and_nan() {
        assert!(matches!(Volume::new(2, 2, 2, vec![0.0; 7]), Err(Error::Shape { .. })));
        assert!(Volume::new(1, 1, 2, vec![0.0, f32::NAN]).is_err());
    }

    #[test]
    fn subject_requires_matching_dims() {
        let v = volume(4, 4, 4);
        let l = LabelMap::new(4, 2, vec![0; 8]).unwrap();
        assert!(Subject::new("a".into(), Grade::Hgg, v, l).is_err());
    }

    #[test]
    fn stratify_edge_cases() {
        let (h, l) = stratify(&[]);
        assert!(h.is_empty() && l.is_empty());
        let s = |id: &str, g| {
            Subject::new(id.into(), g, volume(1, 2, 2), LabelMap::new(2, 2, vec![0; 4]).unwrap()).unwrap()
        };
        let cohort = vec![s("a", Grade::Hgg), s("b", Grade::Hgg)];
        let (h, l) = stratify(&cohort);
        assert_eq!(h.len(), 2);
        assert!(l.is_empty());
        let cohort = vec![s("a", Grade::Lgg), s("b", Grade::Hgg), s("c", Grade::Lgg)];
        let (h, l) = stratify(&cohort);
        assert_eq!(h.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["b"]);
        assert_eq!(l.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
    }

    #[test]
    fn grade_parsing() {
        assert_eq!("HGG".parse::<Grade>().unwrap(), Grade::Hgg);
        assert_eq!("LGG".parse::<Grade>().unwrap(), Grade::Lgg);
        assert!("hgg".parse::<Grade>().is_err());
        assert_eq!(Grade::Hgg.injection_value(), 1.0);
    }
}
