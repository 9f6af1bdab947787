use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::regions::{dice, labels_mask, RegionKind};
use crate::dataset::{LabelMap, Subject};
use crate::error::{Error, Result};
use crate::model::load_checkpoint;
use crate::training::{ExperimentManifest, Regime};

pub const SCORES_HEADER: &str = "subject_id,regime,fold,epoch,region,dice";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    subject: String,
    regime: Regime,
    epoch: usize,
    region: RegionKind,
}

/// Dice per (subject, regime, epoch, region), remembering the test fold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    entries: BTreeMap<Key, (usize, f64)>,
}

impl ScoreTable {
    pub fn insert(&mut self, subject: &str, regime: Regime, fold: usize, epoch: usize, region: RegionKind, dice: f64) {
        let key = Key { subject: subject.to_string(), regime, epoch, region };
        self.entries.insert(key, (fold, dice));
    }

    pub fn get(&self, subject: &str, regime: Regime, epoch: usize, region: RegionKind) -> Option<f64> {
        let key = Key { subject: subject.to_string(), regime, epoch, region };
        self.entries.get(&key).map(|&(_, d)| d)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn epochs(&self) -> Vec<usize> {
        self.entries.keys().map(|k| k.epoch).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn last_epoch(&self) -> Option<usize> {
        self.entries.keys().map(|k| k.epoch).max()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.values().map(|&(_, d)| d)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SCORES_HEADER);
        out.push('\n');
        for (k, (fold, d)) in &self.entries {
            out.push_str(&format!("{},{},{},{},{},{}\n", k.subject, k.regime, fold, k.epoch, k.region, d));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ScoreTable> {
        let mut lines = text.lines();
        if lines.next() != Some(SCORES_HEADER) {
            return Err(Error::format("scores.csv", format!("expected header {SCORES_HEADER:?}")));
        }
        let mut table = ScoreTable::default();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let field = format!("scores.csv line {}", n + 2);
            let parts: Vec<&str> = line.split(',').collect();
            let [subject, regime, fold, epoch, region, d] = parts[..] else {
                return Err(Error::format(field, "expected 6 fields"));
            };
            let num =
                |s: &str| s.parse::<usize>().map_err(|_| Error::format(field.clone(), format!("bad integer {s:?}")));
            let d: f64 = d.parse().map_err(|_| Error::format(field.clone(), format!("bad dice {d:?}")))?;
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::format(field, format!("dice {d} outside [0, 1]")));
            }
            table.insert(subject, regime.parse()?, num(fold)?, num(epoch)?, region.parse()?, d);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ScoreTable> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ScoreTable::from_csv(&text)
    }
}

/// Dice of `predicted` against `truth` for each region.
pub fn region_dice(predicted: &[u8], truth: &LabelMap) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (slot, region) in out.iter_mut().zip(RegionKind::ALL) {
        *slot = dice(&labels_mask(predicted, region), &labels_mask(truth.labels(), region))?;
    }
    Ok(out)
}

/// (subject, regime, fold, epoch, per-region Dice)
type Scored = (String, Regime, usize, usize, [f64; 3]);

/// Scores every checkpoint of every run on that run's test subjects.
pub fn score_runs(manifest: &ExperimentManifest, cohort: &[Subject]) -> Result<ScoreTable> {
    let by_id: BTreeMap<&str, &Subject> = cohort.iter().map(|s| (s.id.as_str(), s)).collect();
    let jobs: Vec<(usize, usize)> = manifest
        .records
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| (0..rec.checkpoints.len()).map(move |e| (r, e)))
        .collect();
    let scored: Vec<Vec<Scored>> = jobs
        .par_iter()
        .map(|&(r, e)| {
            let rec = &manifest.records[r];
            let path = manifest.root.join(&rec.checkpoints[e]);
            let state = load_checkpoint(&path)
                .map_err(|err| Error::Manifest(format!("{} fold {} epoch {}: {err}", rec.regime, rec.fold, e + 1)))?;
            rec.test_ids
                .iter()
                .map(|id| {
                    let subject = by_id
                        .get(id.as_str())
                        .ok_or_else(|| Error::Manifest(format!("test subject {id} not in cohort")))?;
                    let pred = state.forward(&rec.regime.input_for(subject))?;
                    Ok((id.clone(), rec.regime, rec.fold, e + 1, region_dice(&pred.hard_labels, &subject.labels)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut table = ScoreTable::default();
    for (id, regime, fold, epoch, d) in scored.into_iter().flatten() {
        for (region, v) in RegionKind::ALL.into_iter().zip(d) {
            table.insert(&id, regime, fold, epoch, region, v);
        }
    }
    Ok(table)
}
