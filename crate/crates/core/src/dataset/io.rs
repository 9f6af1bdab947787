//! On-disk subject and cohort format.
//!
//! A subject directory holds `meta` (`key=value` lines: id, grade, channels,
//! height, width), `image.f32` (little-endian f32, channel-major then
//! row-major) and `labels.u8` (row-major bytes). The cohort manifest has one
//! `<id>\t<relative-path>\t<grade>` line per subject.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{Grade, LabelMap, Subject, Volume};
use crate::error::{Error, Result};

pub const COHORT_MANIFEST: &str = "manifest.tsv";
const META: &str = "meta";
const IMAGE: &str = "image.f32";
const LABELS: &str = "labels.u8";

pub fn save_subject(subject: &Subject, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let v = &subject.volume;
    let meta = format!(
        "id={}\ngrade={}\nchannels={}\nheight={}\nwidth={}\n",
        subject.id,
        subject.grade,
        v.channels(),
        v.height(),
        v.width()
    );
    write(&dir.join(META), meta.as_bytes())?;
    let mut image = Vec::with_capacity(v.data().len() * 4);
    for x in v.data() {
        image.extend_from_slice(&x.to_le_bytes());
    }
    write(&dir.join(IMAGE), &image)?;
    write(&dir.join(LABELS), subject.labels.labels())
}

pub fn load_subject(dir: &Path) -> Result<Subject> {
    let meta_path = dir.join(META);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = parse_key_values(&text, "meta")?;
    let field = |key: &str| {
        meta.get(key).map(String::as_str).ok_or_else(|| Error::format(format!("meta.{key}"), "missing field"))
    };
    let dim = |key: &str| -> Result<usize> {
        let raw = field(key)?;
        raw.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::format(format!("meta.{key}"), format!("invalid value {raw:?}")))
    };
    let id = field("id")?.to_string();
    let grade: Grade = field("grade")?
        .parse()
        .map_err(|_| Error::format("meta.grade", format!("expected LGG or HGG, got {:?}", meta["grade"])))?;
    let (channels, height, width) = (dim("channels")?, dim("height")?, dim("width")?);

    let image_path = dir.join(IMAGE);
    let raw = fs::read(&image_path).map_err(|e| Error::io(&image_path, e))?;
    let expected = channels * height * width * 4;
    if raw.len() != expected {
        return Err(Error::format(
            IMAGE,
            format!("expected {expected} bytes for {channels}x{height}x{width}, found {}", raw.len()),
        ));
    }
    let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();

    let labels_path = dir.join(LABELS);
    let labels = fs::read(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    if labels.len() != height * width {
        return Err(Error::format(
            LABELS,
            format!("expected {} bytes for {height}x{width}, found {}", height * width, labels.len()),
        ));
    }

    let volume = Volume::new(channels, height, width, data).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(IMAGE, message),
        other => other,
    })?;
    let labels = LabelMap::new(height, width, labels).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(LABELS, message),
        other => other,
    })?;
    Subject::new(id, grade, volume, labels)
}

/// One line of the cohort manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortEntry {
    pub id: String,
    pub path: PathBuf,
    pub grade: Grade,
}

/// Writes every subject under `root/subjects/<id>` plus `root/manifest.tsv`.
pub fn save_cohort(cohort: &[Subject], root: &Path) -> Result<()> {
    let mut manifest = String::new();
    let mut seen = HashSet::new();
    for subject in cohort {
        if !seen.insert(subject.id.as_str()) {
            return Err(Error::Config(format!("duplicate subject id {}", subject.id)));
        }
        let rel = PathBuf::from("subjects").join(&subject.id);
        save_subject(subject, &root.join(&rel))?;
        manifest.push_str(&format!("{}\t{}\t{}\n", subject.id, rel.display(), subject.grade));
    }
    write(&root.join(COHORT_MANIFEST), manifest.as_bytes())
}

pub fn read_cohort_manifest(root: &Path) -> Result<Vec<CohortEntry>> {
    let path = root.join(COHORT_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let parts: Vec<&str> = line.split('\t').collect();
        let [id, rel, grade] = parts[..] else {
            return Err(Error::format(format!("{COHORT_MANIFEST} line {}", n + 1), "expected 3 tab-separated fields"));
        };
        entries.push(CohortEntry { id: id.to_string(), path: PathBuf::from(rel), grade: grade.parse()? });
    }
    Ok(entries)
}

/// Loads every subject listed in `root/manifest.tsv`, checking that the
/// manifest grade agrees with the subject metadata.
pub fn load_cohort(root: &Path) -> Result<Vec<Subject>> {
    read_cohort_manifest(root)?
        .into_iter()
        .map(|entry| {
            let subject = load_subject(&root.join(&entry.path))?;
            if subject.id != entry.id || subject.grade != entry.grade {
                return Err(Error::format(
                    COHORT_MANIFEST,
                    format!(
                        "entry {} ({}) disagrees with subject meta {} ({})",
                        entry.id, entry.grade, subject.id, subject.grade
                    ),
                ));
            }
            Ok(subject)
        })
        .collect()
}

pub(crate) fn parse_key_values(text: &str, field: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::format(format!("{field} line {}", n + 1), format!("expected key=value, got {line:?}"))
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_phantom, PhantomConfig};

    #[test]
    fn subject_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_phantom(&PhantomConfig::default(), Grade::Lgg, 3).unwrap();
        save_subject(&s, dir.path()).unwrap();
        let back = load_subject(dir.path()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn illegal_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_phantom(&PhantomConfig::default().resized(8), Grade::Hgg, 0).unwrap();
        save_subject(&s, dir.path()).unwrap();
        let mut labels = fs::read(dir.path().join(LABELS)).unwrap();
        labels[5] = 3;
        fs::write(dir.path().join(LABELS), labels).unwrap();
        let err = load_subject(dir.path()).unwrap_err().to_string();
        assert!(err.contains("illegal label value 3"), "{err}");
        assert!(err.contains(LABELS), "{err}");
    }

    #[test]
    fn malformed_meta_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_phantom(&PhantomConfig::default().resized(8), Grade::Hgg, 0).unwrap();
        save_subject(&s, dir.path()).unwrap();
        let meta = fs::read_to_string(dir.path().join(META)).unwrap();
        fs::write(dir.path().join(META), meta.replace("height=8", "height=x")).unwrap();
        let err = load_subject(dir.path()).unwrap_err().to_string();
        assert!(err.contains("meta.height"), "{err}");

        fs::write(dir.path().join(META), meta.replace("width=8", "width=9")).unwrap();
        let err = load_subject(dir.path()).unwrap_err().to_string();
        assert!(err.contains(IMAGE), "{err}");

        fs::write(dir.path().join(META), meta.replace("grade=HGG", "grade=GBM")).unwrap();
        let err = load_subject(dir.path()).unwrap_err().to_string();
        assert!(err.contains("meta.grade"), "{err}");
    }

    #[test]
    fn cohort_manifest_lines() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PhantomConfig::default().resized(8);
        let cohort = crate::dataset::generate_cohort(&cfg, 2, 1).unwrap();
        save_cohort(&cohort, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(COHORT_MANIFEST)).unwrap();
        assert_eq!(
            text,
            "HGG_0000\tsubjects/HGG_0000\tHGG\nHGG_0001\tsubjects/HGG_0001\tHGG\nLGG_0000\tsubjects/LGG_0000\tLGG\n"
        );
        assert_eq!(load_cohort(dir.path()).unwrap(), cohort);
    }
}
