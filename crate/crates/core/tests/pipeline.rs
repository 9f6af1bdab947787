use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use gradeseg::cli::{cmd_generate, cmd_report, cmd_run, ExperimentConfig};
use gradeseg::dataset::{generate_cohort, generate_phantom, load_cohort, Grade, PhantomConfig};
use gradeseg::training::{ExperimentManifest, Regime};
use gradeseg::Error;

fn tiny(dir: &std::path::Path, epochs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        output_dir: dir.to_path_buf(),
        seed: 3,
        n_hgg: 6,
        n_lgg: 3,
        folds: 3,
        ..ExperimentConfig::default()
    };
    cfg.phantom = PhantomConfig::default().resized(16);
    cfg.train.epochs = epochs;
    cfg.train.learning_rate = 3e-3;
    cfg
}

#[test]
fn enhancement_frequency_follows_grade_probabilities() {
    let cfg = PhantomConfig {
        hgg_enhancement_probability: 1.0,
        lgg_enhancement_probability: 0.05,
        ..PhantomConfig::default().resized(32)
    };
    let enhancing = |grade: Grade, n: u64| {
        (0..n).filter(|&s| generate_phantom(&cfg, grade, s).unwrap().labels.labels().contains(&4)).count()
    };
    assert_eq!(enhancing(Grade::Hgg, 1000), 1000);
    let lgg = enhancing(Grade::Lgg, 1000) as f64 / 1000.0;
    assert!((0.03..=0.08).contains(&lgg), "{lgg}");
}

#[test]
fn cohort_grades_and_ids() {
    let cohort = generate_cohort(&PhantomConfig::default().resized(16), 5, 2).unwrap();
    let grades: Vec<_> = cohort.iter().map(|s| (s.id.as_str(), s.grade)).collect();
    assert_eq!(grades[0], ("HGG_0000", Grade::Hgg));
    assert_eq!(grades[5], ("LGG_0000", Grade::Lgg));
    assert_eq!(cohort.len(), 7);
}

#[test]
fn full_run_respects_the_protocol_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), 6);
    cmd_generate(&cfg).unwrap();
    let manifest = cmd_run(&cfg).unwrap();
    let cohort = load_cohort(&cfg.cohort_dir()).unwrap();
    let grades: BTreeMap<&str, Grade> = cohort.iter().map(|s| (s.id.as_str(), s.grade)).collect();

    assert_eq!(manifest.records.len(), 4 * 3);
    for regime in Regime::ALL {
        let mut tested = BTreeMap::new();
        for rec in manifest.records.iter().filter(|r| r.regime == regime) {
            let train: BTreeSet<_> = rec.train_ids.iter().collect();
            for id in &rec.test_ids {
                assert!(!train.contains(id), "{regime}: {id} leaks");
                assert!(regime.accepts(grades[id.as_str()]));
                *tested.entry(id.clone()).or_insert(0) += 1;
            }
            assert!(rec.train_ids.iter().all(|id| regime.accepts(grades[id.as_str()])));
            assert_eq!(rec.checkpoints.len(), 6);
            let l = &rec.epoch_losses;
            let head = l[..3].iter().sum::<f64>() / 3.0;
            let tail = l[3..].iter().sum::<f64>() / 3.0;
            assert!(head > tail, "{regime} fold {}: losses {l:?}", rec.fold);
        }
        let applicable = cohort.iter().filter(|s| regime.accepts(s.grade)).count();
        assert_eq!(tested.len(), applicable);
        assert!(tested.values().all(|&n| n == 1));
    }

    // A second invocation reuses every run instead of retraining.
    let ckpt = dir.path().join(&manifest.records[0].checkpoints[5]);
    let stamp = fs::metadata(&ckpt).unwrap().modified().unwrap();
    let again = cmd_run(&cfg).unwrap();
    assert_eq!(fs::metadata(&ckpt).unwrap().modified().unwrap(), stamp);
    assert_eq!(again.index_text(), manifest.index_text());

    let out = cmd_report(&cfg, None).unwrap();
    assert_eq!(out.table.rows.len(), 4);
    assert!(out.text.contains("Type-aware vs. Baseline"));
}

#[test]
fn report_lists_missing_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), 1);
    cmd_generate(&cfg).unwrap();
    match cmd_report(&cfg, None) {
        Err(Error::Manifest(msg)) => assert!(msg.contains("type_aware"), "{msg}"),
        other => panic!("expected a manifest error, got {other:?}"),
    }
    let missing = ExperimentManifest::missing(dir.path(), 3, 1).unwrap();
    assert_eq!(missing.len(), 12);
}

#[test]
fn run_without_cohort_points_to_generate() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_run(&tiny(dir.path(), 1)).unwrap_err().to_string();
    assert!(err.contains("gradeseg generate"), "{err}");
}
