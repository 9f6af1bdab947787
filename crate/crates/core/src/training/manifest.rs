//! Experiment manifest: `runs/<regime>/<fold>/epoch_<e>.ckpt`, a per-run
//! `record.txt` written once the run is complete, and `runs/index.tsv`
//! listing every run's train and test ids.

use std::fs;
use std::path::{Path, PathBuf};

use super::Regime;
use crate::dataset::io_util::{parse_key_values, write};
use crate::error::{Error, Result};

pub const RUNS_DIR: &str = "runs";
pub const RUN_INDEX: &str = "index.tsv";
const RECORD: &str = "record.txt";
const INDEX_HEADER: &str = "regime\tfold\tepochs\ttrain_ids\ttest_ids";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub regime: Regime,
    pub fold: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// Checkpoint per epoch, relative to the experiment root.
    pub checkpoints: Vec<PathBuf>,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub(crate) fn run_dir(regime: Regime, fold: usize) -> PathBuf {
    PathBuf::from(RUNS_DIR).join(regime.as_str()).join(fold.to_string())
}

pub(crate) fn checkpoint_path(regime: Regime, fold: usize, epoch: usize) -> PathBuf {
    run_dir(regime, fold).join(format!("epoch_{epoch}.ckpt"))
}

impl RunRecord {
    pub fn epochs(&self) -> usize {
        self.checkpoints.len()
    }

    pub(crate) fn save(&self, root: &Path) -> Result<()> {
        let losses: Vec<String> = self.epoch_losses.iter().map(|l| l.to_string()).collect();
        let text = format!(
            "regime={}\nfold={}\nepochs={}\ntrain_ids={}\ntest_ids={}\nepoch_losses={}\n",
            self.regime,
            self.fold,
            self.epochs(),
            self.train_ids.join(","),
            self.test_ids.join(","),
            losses.join(",")
        );
        write(&root.join(run_dir(self.regime, self.fold)).join(RECORD), text.as_bytes())
    }

    /// Loads a finished run, or `None` when its record or any checkpoint is
    /// missing.
    pub(crate) fn load_complete(root: &Path, regime: Regime, fold: usize) -> Result<Option<RunRecord>> {
        let path = root.join(run_dir(regime, fold)).join(RECORD);
        let Ok(text) = fs::read_to_string(&path) else {
            return Ok(None);
        };
        let kv = parse_key_values(&text, RECORD)?;
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::format(format!("{}.{k}", path.display()), "missing field"))
        };
        let list = |k: &str| -> Result<Vec<String>> {
            Ok(get(k)?.split(',').filter(|s| !s.is_empty()).map(String::from).collect())
        };
        let epochs: usize = get("epochs")?
            .parse()
            .map_err(|_| Error::format(format!("{}.epochs", path.display()), "not an integer"))?;
        let epoch_losses = get("epoch_losses")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::format(format!("{}.epoch_losses", path.display()), s)))
            .collect::<Result<Vec<_>>>()?;
        let checkpoints: Vec<PathBuf> = (1..=epochs).map(|e| checkpoint_path(regime, fold, e)).collect();
        if checkpoints.iter().any(|c| !root.join(c).is_file()) {
            return Ok(None);
        }
        Ok(Some(RunRecord {
            regime,
            fold,
            train_ids: list("train_ids")?,
            test_ids: list("test_ids")?,
            checkpoints,
            epoch_losses,
        }))
    }
}

/// All runs of one experiment, ordered by (regime, fold).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub root: PathBuf,
    pub k: usize,
    pub epochs: usize,
    pub records: Vec<RunRecord>,
}

impl ExperimentManifest {
    pub fn index_text(&self) -> String {
        let mut out = format!("{INDEX_HEADER}\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.regime,
                r.fold,
                r.epochs(),
                r.train_ids.join(","),
                r.test_ids.join(",")
            ));
        }
        out
    }

    pub(crate) fn write_index(&self) -> Result<()> {
        write(&self.root.join(RUNS_DIR).join(RUN_INDEX), self.index_text().as_bytes())
    }

    /// (regime, fold, epoch) triples without a checkpoint or whose run has
    /// no completion record.
    pub fn missing(root: &Path, k: usize, epochs: usize) -> Result<Vec<(Regime, usize, usize)>> {
        let mut missing = Vec::new();
        for regime in Regime::ALL {
            for fold in 0..k {
                let complete = RunRecord::load_complete(root, regime, fold)?.filter(|r| r.epochs() == epochs).is_some();
                for epoch in 1..=epochs {
                    if !complete || !root.join(checkpoint_path(regime, fold, epoch)).is_file() {
                        missing.push((regime, fold, epoch));
                    }
                }
            }
        }
        Ok(missing)
    }

    /// Loads a complete experiment with `k` folds and `epochs` epochs.
    pub fn load(root: &Path, k: usize, epochs: usize) -> Result<ExperimentManifest> {
        let missing = Self::missing(root, k, epochs)?;
        if !missing.is_empty() {
            let shown: Vec<String> = missing.iter().take(20).map(|(r, f, e)| format!("({r}, {f}, {e})")).collect();
            return Err(Error::Manifest(format!(
                "incomplete experiment at {}: {} missing (regime, fold, epoch) checkpoints: {}{}",
                root.display(),
                missing.len(),
                shown.join(" "),
                if missing.len() > shown.len() { " ..." } else { "" }
            )));
        }
        let mut records = Vec::new();
        for regime in Regime::ALL {
            for fold in 0..k {
                records.push(RunRecord::load_complete(root, regime, fold)?.expect("checked complete above"));
            }
        }
        Ok(ExperimentManifest { root: root.to_path_buf(), k, epochs, records })
    }
}
