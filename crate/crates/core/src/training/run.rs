use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::manifest::{checkpoint_path, ExperimentManifest, RunRecord};
use super::optim::OptimizerState;
use super::{FoldPlan, Regime, TrainConfig};
use crate::dataset::{Grade, Subject};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, ModelSpec, ModelState, Tensor};
use crate::seeds;

struct Split<'a> {
    train: Vec<&'a Subject>,
    test: Vec<&'a Subject>,
}

fn split<'a>(regime: Regime, plan: &FoldPlan, fold: usize, cohort: &'a [Subject]) -> Result<Split<'a>> {
    if fold >= plan.k {
        return Err(Error::Config(format!("fold {fold} out of range for k={}", plan.k)));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in cohort.iter().filter(|s| regime.accepts(s.grade)) {
        let f = plan.fold_of(&s.id).ok_or_else(|| Error::Config(format!("subject {} missing from fold plan", s.id)))?;
        if f == fold {
            test.push(s);
        } else {
            train.push(s);
        }
    }
    if train.is_empty() {
        return Err(Error::Config(format!("{regime} fold {fold} has an empty training set")));
    }
    Ok(Split { train, test })
}

/// Train and test subjects of `regime` for one fold: test = the regime's
/// subjects assigned to `fold`, train = its remaining subjects.
pub fn fold_split<'a>(
    regime: Regime,
    plan: &FoldPlan,
    fold: usize,
    cohort: &'a [Subject],
) -> Result<(Vec<&'a Subject>, Vec<&'a Subject>)> {
    let Split { train, test } = split(regime, plan, fold, cohort)?;
    Ok((train, test))
}

fn check_channels(regime: Regime, spec: &ModelSpec, cohort: &[Subject]) -> Result<()> {
    let imaging = cohort.first().map(|s| s.volume.channels()).unwrap_or(0);
    let expected = regime.in_channels(imaging);
    if spec.in_channels != expected {
        return Err(Error::Config(format!(
            "{regime} needs a model with {expected} input channels, spec has {}",
            spec.in_channels
        )));
    }
    Ok(())
}

/// Trains one regime on every fold except `fold`, checkpointing each epoch
/// under `root`. Deterministic in `(spec.seed, config.seed, regime, fold)`.
pub fn train_fold(
    regime: Regime,
    plan: &FoldPlan,
    fold: usize,
    cohort: &[Subject],
    spec: &ModelSpec,
    config: &TrainConfig,
    root: &Path,
) -> Result<RunRecord> {
    config.validate()?;
    check_channels(regime, spec, cohort)?;
    let Split { train, test } = split(regime, plan, fold, cohort)?;
    let inputs: Vec<_> = train.iter().map(|s| (regime.input_for(s), &s.labels)).collect();

    let mut state = ModelState::<f32>::init(spec)?;
    let mut optimizer = OptimizerState::new(config.optimizer, config.learning_rate, state.parameters());
    let mut rng = seeds::rng(config.seed, &[seeds::BATCHES, regime.as_str(), &fold.to_string()]);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut checkpoints = Vec::with_capacity(config.epochs);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut total: Option<Vec<Tensor<f32>>> = None;
            for &i in batch {
                let (volume, labels) = &inputs[i];
                let g = state.backward(volume, labels)?;
                loss_sum += g.loss;
                match &mut total {
                    None => total = Some(g.tensors),
                    Some(acc) => {
                        for (a, t) in acc.iter_mut().zip(&g.tensors) {
                            a.data.iter_mut().zip(&t.data).for_each(|(x, y)| *x += *y);
                        }
                    }
                }
            }
            let mut grads = total.expect("batches are nonempty");
            let scale = 1.0 / batch.len() as f32;
            grads.iter_mut().for_each(|t| t.data.iter_mut().for_each(|x| *x *= scale));
            optimizer.apply(state.parameters_mut(), &grads);
        }
        if !state.all_finite() {
            return Err(Error::Config(format!(
                "{regime} fold {fold}: non-finite parameters after epoch {epoch}; lower the learning rate"
            )));
        }
        let rel = checkpoint_path(regime, fold, epoch);
        save_checkpoint(&state, &root.join(&rel))?;
        checkpoints.push(rel);
        epoch_losses.push(loss_sum / inputs.len() as f64);
    }

    let record = RunRecord {
        regime,
        fold,
        train_ids: train.iter().map(|s| s.id.clone()).collect(),
        test_ids: test.iter().map(|s| s.id.clone()).collect(),
        checkpoints,
        epoch_losses,
    };
    record.save(root)?;
    Ok(record)
}

/// Trains all four regimes on every fold of `plan` (in parallel across runs),
/// reusing runs already complete on disk, and writes the run index.
pub fn run_all(
    cohort: &[Subject],
    spec4: &ModelSpec,
    spec5: &ModelSpec,
    config: &TrainConfig,
    plan: &FoldPlan,
    root: &Path,
) -> Result<ExperimentManifest> {
    let jobs: Vec<(Regime, usize)> = Regime::ALL.into_iter().flat_map(|r| (0..plan.k).map(move |f| (r, f))).collect();
    let records = jobs
        .par_iter()
        .map(|&(regime, fold)| {
            let spec = if regime == Regime::TypeAware { spec5 } else { spec4 };
            let wrap = |e: Error| Error::Run { regime: regime.to_string(), fold, source: Box::new(e) };
            if let Some(done) = RunRecord::load_complete(root, regime, fold).map_err(wrap)? {
                let Split { train, test } = split(regime, plan, fold, cohort).map_err(wrap)?;
                let same = |ids: &[String], subs: &[&Subject]| ids.iter().eq(subs.iter().map(|s| &s.id));
                if done.epochs() == config.epochs && same(&done.train_ids, &train) && same(&done.test_ids, &test) {
                    return Ok(done);
                }
            }
            train_fold(regime, plan, fold, cohort, spec, config, root).map_err(wrap)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = ExperimentManifest { root: root.to_path_buf(), k: plan.k, epochs: config.epochs, records };
    manifest.write_index()?;
    Ok(manifest)
}

/// How many high-grade test subjects change their predicted enhancing-tumor
/// pixel count when the type-aware model is told the wrong grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradeFlip {
    pub changed: usize,
    pub total: usize,
}

impl GradeFlip {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.changed as f64 / self.total as f64
        }
    }
}

pub fn grade_flip_sensitivity(manifest: &ExperimentManifest, cohort: &[Subject], epoch: usize) -> Result<GradeFlip> {
    let by_id: BTreeMap<&str, &Subject> = cohort.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut flip = GradeFlip { changed: 0, total: 0 };
    for rec in manifest.records.iter().filter(|r| r.regime == Regime::TypeAware) {
        let ckpt = rec
            .checkpoints
            .get(epoch.wrapping_sub(1))
            .ok_or_else(|| Error::Manifest(format!("type_aware fold {} has no epoch {epoch}", rec.fold)))?;
        let state = load_checkpoint(&manifest.root.join(ckpt))?;
        for id in &rec.test_ids {
            let subject =
                by_id.get(id.as_str()).ok_or_else(|| Error::Manifest(format!("test subject {id} not in cohort")))?;
            if subject.grade != Grade::Hgg {
                continue;
            }
            let ce = |grade: Grade| -> Result<usize> {
                let pred = state.forward(&Regime::TypeAware.input_with_grade(subject, grade))?;
                Ok(pred.hard_labels.iter().filter(|&&l| l == 4).count())
            };
            flip.total += 1;
            if ce(Grade::Hgg)? != ce(Grade::Lgg)? {
                flip.changed += 1;
            }
        }
    }
    Ok(flip)
}
