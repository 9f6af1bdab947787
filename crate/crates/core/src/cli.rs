//! Experiment configuration and the `generate` / `run` / `report` /
//! `compare` / `curves` commands.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.toml                 resolved configuration
//! cohort/manifest.tsv         cohort manifest + cohort/subjects/<id>/
//! runs/<regime>/<fold>/       checkpoints and run records; runs/index.tsv
//! report/                     scores.csv, table.txt, table.csv, curves/
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_cohort, load_cohort, save_cohort, Grade, PhantomConfig, Subject, COHORT_MANIFEST};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::seeds;
use crate::statistics::{
    compare, curves_csv, curves_grid_svg, curves_svg, per_epoch_curves, render_csv, render_text, score_runs, Arm,
    Comparison, ComparisonResult, Curves, RegionKind, ReportTable, ScoreTable, SubjectSet,
};
use crate::training::{make_folds, run_all, ExperimentManifest, FoldPlan, TrainConfig, RUNS_DIR};

pub const CONFIG_FILE: &str = "config.toml";
pub const COHORT_DIR: &str = "cohort";
pub const REPORT_DIR: &str = "report";
pub const SCORES_FILE: &str = "scores.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    pub n_hgg: usize,
    pub n_lgg: usize,
    pub folds: usize,
    pub phantom: PhantomConfig,
    pub train: TrainConfig,
    pub model: ModelSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("experiment"),
            seed: 2019,
            n_hgg: 210,
            n_lgg: 75,
            folds: 5,
            phantom: PhantomConfig::default(),
            train: TrainConfig::default(),
            model: ModelSpec::default(),
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub folds: Option<usize>,
    pub size: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(epochs) = o.epochs {
            self.train.epochs = epochs;
        }
        if let Some(folds) = o.folds {
            self.folds = folds;
        }
        if let Some(size) = o.size {
            self.phantom = self.phantom.resized(size);
        }
        self
    }

    /// Fills every subordinate seed from the master seed through the named
    /// streams `data`, `init` and `batches` (folds use `folds`, see
    /// [`ExperimentConfig::fold_seed`]) and validates the result.
    pub fn resolved(&self) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.phantom.seed = seeds::derive(self.seed, &[seeds::DATA]);
        cfg.model.seed = seeds::derive(self.seed, &[seeds::INIT]);
        cfg.train.seed = seeds::derive(self.seed, &[seeds::BATCHES]);
        cfg.model.in_channels = cfg.phantom.n_channels;
        cfg.phantom.validate()?;
        cfg.train.validate()?;
        cfg.model.validate().map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{msg} (model input follows phantom.n_channels)")),
            other => other,
        })?;
        let m = cfg.model.size_multiple();
        if !cfg.phantom.image_size.is_multiple_of(m) {
            return Err(Error::Config(format!(
                "image_size {} must be divisible by {m} for a {}-level model",
                cfg.phantom.image_size, cfg.model.n_levels
            )));
        }
        if cfg.n_hgg < cfg.folds || cfg.n_lgg < cfg.folds {
            return Err(Error::Config(format!(
                "each grade needs at least {} subjects for {}-fold cross-validation",
                cfg.folds, cfg.folds
            )));
        }
        Ok(cfg)
    }

    pub fn fold_seed(&self) -> u64 {
        seeds::derive(self.seed, &[seeds::FOLDS])
    }

    pub fn spec4(&self) -> ModelSpec {
        self.model.with_in_channels(self.phantom.n_channels)
    }

    pub fn spec5(&self) -> ModelSpec {
        self.model.with_in_channels(self.phantom.n_channels + 1)
    }

    pub fn cohort_dir(&self) -> PathBuf {
        self.output_dir.join(COHORT_DIR)
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.join(REPORT_DIR)
    }

    fn persist(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir).map_err(|e| Error::io(&self.output_dir, e))?;
        let path = self.output_dir.join(CONFIG_FILE);
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates the phantom cohort and writes it with its manifest.
pub fn cmd_generate(config: &ExperimentConfig) -> Result<Vec<Subject>> {
    let cfg = config.resolved()?;
    let cohort = generate_cohort(&cfg.phantom, cfg.n_hgg, cfg.n_lgg)?;
    cfg.persist()?;
    save_cohort(&cohort, &cfg.cohort_dir())?;
    Ok(cohort)
}

fn load_existing_cohort(cfg: &ExperimentConfig) -> Result<Vec<Subject>> {
    let dir = cfg.cohort_dir();
    if !dir.join(COHORT_MANIFEST).is_file() {
        return Err(Error::Config(format!("no cohort at {}; run `gradeseg generate` first", dir.display())));
    }
    load_cohort(&dir)
}

fn fold_plan_text(plan: &FoldPlan) -> String {
    let mut out = String::from("subject_id\tfold\n");
    for (id, fold) in &plan.assignment {
        out.push_str(&format!("{id}\t{fold}\n"));
    }
    out
}

/// Trains every regime on every fold; complete runs on disk are reused.
pub fn cmd_run(config: &ExperimentConfig) -> Result<ExperimentManifest> {
    let cfg = config.resolved()?;
    let cohort = load_existing_cohort(&cfg)?;
    let plan = make_folds(&cohort, cfg.folds, cfg.fold_seed())?;
    cfg.persist()?;
    write_file(&cfg.output_dir.join(RUNS_DIR).join("folds.tsv"), &fold_plan_text(&plan))?;
    run_all(&cohort, &cfg.spec4(), &cfg.spec5(), &cfg.train, &plan, &cfg.output_dir)
}

fn grades(cohort: &[Subject]) -> BTreeMap<String, Grade> {
    cohort.iter().map(|s| (s.id.clone(), s.grade)).collect()
}

/// Scores every checkpoint and writes `report/scores.csv`.
pub fn cmd_score(config: &ExperimentConfig) -> Result<(ScoreTable, Vec<Subject>)> {
    let cfg = config.resolved()?;
    let manifest = ExperimentManifest::load(&cfg.output_dir, cfg.folds, cfg.train.epochs)?;
    let cohort = load_existing_cohort(&cfg)?;
    let table = score_runs(&manifest, &cohort)?;
    let path = cfg.report_dir().join(SCORES_FILE);
    write_file(&path, &table.to_csv())?;
    Ok((table, cohort))
}

fn scores_and_grades(cfg: &ExperimentConfig) -> Result<(ScoreTable, BTreeMap<String, Grade>)> {
    let path = cfg.report_dir().join(SCORES_FILE);
    if path.is_file() {
        let cohort = crate::dataset::read_cohort_manifest(&cfg.cohort_dir())?;
        let grades = cohort.into_iter().map(|e| (e.id, e.grade)).collect();
        return Ok((ScoreTable::load(&path)?, grades));
    }
    let (table, cohort) = cmd_score(cfg)?;
    Ok((table, grades(&cohort)))
}

fn region_curves(table: &ScoreTable, variant: Arm, baseline: Arm, subjects: &[String]) -> Result<Curves> {
    RegionKind::ALL.iter().map(|&r| Ok((r, per_epoch_curves(table, variant, baseline, subjects, r)?))).collect()
}

/// What `report` produced.
#[derive(Debug, Clone)]
pub struct ReportOutputs {
    pub table: ReportTable,
    pub text: String,
    pub files: Vec<PathBuf>,
}

/// Scores all runs, then writes the comparison table (text + CSV) at
/// `epoch` (default: final epoch) and one curve panel per comparison.
pub fn cmd_report(config: &ExperimentConfig, epoch: Option<usize>) -> Result<ReportOutputs> {
    let cfg = config.resolved()?;
    let (scores, cohort) = cmd_score(&cfg)?;
    let grades = grades(&cohort);
    let epoch = epoch.unwrap_or(cfg.train.epochs);
    if epoch == 0 || epoch > cfg.train.epochs {
        return Err(Error::Argument(format!("epoch must be in 1..={}", cfg.train.epochs)));
    }
    let report_dir = cfg.report_dir();
    let mut files = vec![report_dir.join(SCORES_FILE)];

    let mut rows = Vec::new();
    let mut panels = Vec::new();
    for cmp in Comparison::ALL {
        let subjects = cmp.subjects().select(&grades);
        rows.push((cmp, compare(&scores, cmp.variant(), cmp.baseline(), &subjects, epoch)?));
        let curves = region_curves(&scores, cmp.variant(), cmp.baseline(), &subjects)?;
        for (ext, body) in [("csv", curves_csv(&curves)), ("svg", curves_svg(cmp.label(), &curves))] {
            let path = report_dir.join("curves").join(format!("{}.{ext}", cmp.file_stem()));
            write_file(&path, &body)?;
            files.push(path);
        }
        panels.push((cmp.label().to_string(), curves));
    }
    let overview = report_dir.join("curves").join("overview.svg");
    write_file(&overview, &curves_grid_svg(&panels))?;
    files.push(overview);

    let table = ReportTable { epoch, rows };
    let text = render_text(&table);
    for (name, body) in [("table.txt", text.clone()), ("table.csv", render_csv(&table))] {
        let path = report_dir.join(name);
        write_file(&path, &body)?;
        files.push(path);
    }
    Ok(ReportOutputs { table, text, files })
}

/// Ad-hoc comparison of two arms on a subject set.
pub fn cmd_compare(
    config: &ExperimentConfig,
    variant: Arm,
    baseline: Arm,
    set: SubjectSet,
    epoch: Option<usize>,
) -> Result<Vec<ComparisonResult>> {
    let cfg = config.resolved()?;
    let (scores, grades) = scores_and_grades(&cfg)?;
    let epoch = epoch.or(scores.last_epoch()).ok_or_else(|| Error::Manifest("score table is empty".into()))?;
    compare(&scores, variant, baseline, &set.select(&grades), epoch)
}

/// Writes `report/curves/<name>.csv` and `.svg` for an ad-hoc pair of arms.
pub fn cmd_curves(
    config: &ExperimentConfig,
    variant: Arm,
    baseline: Arm,
    set: SubjectSet,
    name: &str,
) -> Result<Vec<PathBuf>> {
    let cfg = config.resolved()?;
    let (scores, grades) = scores_and_grades(&cfg)?;
    let curves = region_curves(&scores, variant, baseline, &set.select(&grades))?;
    let dir = cfg.report_dir().join("curves");
    let title = format!("{variant} vs. {baseline}");
    let csv = dir.join(format!("{name}.csv"));
    let svg = dir.join(format!("{name}.svg"));
    write_file(&csv, &curves_csv(&curves))?;
    write_file(&svg, &curves_svg(&title, &curves))?;
    Ok(vec![csv, svg])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 5\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.n_hgg, 210);
    }

    #[test]
    fn seeds_derive_from_master() {
        let a = ExperimentConfig::default().resolved().unwrap();
        let b = ExperimentConfig { seed: 1, ..ExperimentConfig::default() }.resolved().unwrap();
        assert_ne!(a.phantom.seed, b.phantom.seed);
        assert_ne!(a.phantom.seed, a.model.seed);
        assert_ne!(a.model.seed, a.train.seed);
        assert_eq!(a, ExperimentConfig::default().resolved().unwrap());
    }

    #[test]
    fn overrides_apply() {
        let o =
            Overrides { seed: Some(9), epochs: Some(2), folds: Some(3), size: Some(32), output_dir: Some("x".into()) };
        let cfg = ExperimentConfig::default().with_overrides(&o);
        assert_eq!((cfg.seed, cfg.train.epochs, cfg.folds), (9, 2, 3));
        assert_eq!(cfg.phantom.image_size, 32);
        assert_eq!(cfg.output_dir, PathBuf::from("x"));
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.phantom.image_size = 30;
        cfg.model.n_levels = 3;
        assert!(cfg.resolved().is_err());
        let cfg = ExperimentConfig { n_lgg: 3, ..ExperimentConfig::default() };
        assert!(cfg.resolved().is_err());
    }
}
