//! Training regimes, the shared grade-stratified fold plan and the
//! cross-validated experiment runner.

mod folds;
mod manifest;
mod optim;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{inject_grade_channel, Grade, Subject, Volume};
use crate::error::{Error, Result};

pub use folds::{make_folds, FoldPlan};
pub use manifest::{ExperimentManifest, RunRecord, RUNS_DIR, RUN_INDEX};
pub use optim::Optimizer;
pub use run::{fold_split, grade_flip_sensitivity, run_all, train_fold, GradeFlip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    /// All grades, imaging channels only.
    Baseline,
    HggOnly,
    LggOnly,
    /// All grades with the grade injected as an extra constant channel.
    TypeAware,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Baseline, Regime::HggOnly, Regime::LggOnly, Regime::TypeAware];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Baseline => "baseline",
            Regime::HggOnly => "hgg_only",
            Regime::LggOnly => "lgg_only",
            Regime::TypeAware => "type_aware",
        }
    }

    /// Input channel count the model must accept, given `imaging` channels.
    pub fn in_channels(self, imaging: usize) -> usize {
        match self {
            Regime::TypeAware => imaging + 1,
            _ => imaging,
        }
    }

    /// Whether subjects of `grade` are trained on and tested by this regime.
    pub fn accepts(self, grade: Grade) -> bool {
        match self {
            Regime::HggOnly => grade == Grade::Hgg,
            Regime::LggOnly => grade == Grade::Lgg,
            Regime::Baseline | Regime::TypeAware => true,
        }
    }

    /// Model input for `subject` under this regime.
    pub fn input_for(self, subject: &Subject) -> Volume {
        self.input_with_grade(subject, subject.grade)
    }

    /// Like [`Regime::input_for`] but conditioning on `grade` instead of the
    /// subject's own grade (only meaningful for [`Regime::TypeAware`]).
    pub fn input_with_grade(self, subject: &Subject, grade: Grade) -> Volume {
        match self {
            Regime::TypeAware => inject_grade_channel(&subject.volume, grade),
            _ => subject.volume.clone(),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::format("regime", format!("unknown regime {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, batch_size: 2, learning_rate: 1e-3, optimizer: Optimizer::Adam, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "epochs and batch_size must be >= 1, got {} and {}",
                self.epochs, self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.as_str().parse::<Regime>().unwrap(), r);
        }
        assert!("HGG".parse::<Regime>().is_err());
    }

    #[test]
    fn channel_counts() {
        assert_eq!(Regime::TypeAware.in_channels(4), 5);
        assert_eq!(Regime::HggOnly.in_channels(4), 4);
        assert!(!Regime::HggOnly.accepts(Grade::Lgg));
        assert!(Regime::TypeAware.accepts(Grade::Lgg));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
    }
}
