use std::collections::BTreeMap;

use proptest::prelude::*;

use gradeseg::dataset::{generate_cohort, inject_grade_channel, Grade, LabelMap, PhantomConfig, Volume};
use gradeseg::statistics::{better_ratio, compare, dice, region_mask, wilcoxon_one_sided, Arm, RegionKind, ScoreTable};
use gradeseg::training::{make_folds, Regime};

fn masks(max: usize) -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (1..=max).prop_flat_map(|n| (prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), n)))
}

fn label_map() -> impl Strategy<Value = LabelMap> {
    (1usize..10, 1usize..10).prop_flat_map(|(h, w)| {
        prop::collection::vec(prop::sample::select(vec![0u8, 1, 2, 4]), h * w)
            .prop_map(move |labels| LabelMap::new(h, w, labels).unwrap())
    })
}

/// Differences on a coarse grid so ties and zeros are common.
fn diffs(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-6i32..=6).prop_map(|k| k as f64 * 0.25), 1..=max)
}

fn brute_force_p(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
    if nz.is_empty() {
        return 1.0;
    }
    let rank2 = |x: f64| {
        let less = nz.iter().filter(|e| e.abs() < x.abs()).count() as u64;
        let eq = nz.iter().filter(|e| e.abs() == x.abs()).count() as u64;
        2 * less + eq + 1
    };
    let r: Vec<u64> = nz.iter().map(|&x| rank2(x)).collect();
    let obs: u64 = nz.iter().zip(&r).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let m = nz.len();
    let hits = (0u32..1 << m).filter(|s| (0..m).filter(|i| s >> i & 1 == 1).map(|i| r[i]).sum::<u64>() >= obs).count();
    hits as f64 / (1u64 << m) as f64
}

proptest! {
    #[test]
    fn dice_is_symmetric_and_bounded((a, b) in masks(64)) {
        let ab = dice(&a, &b).unwrap();
        prop_assert_eq!(ab, dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn regions_are_nested(map in label_map()) {
        let ce = region_mask(&map, RegionKind::Ce);
        let core = region_mask(&map, RegionKind::Core);
        let whole = region_mask(&map, RegionKind::Whole);
        for i in 0..ce.len() {
            prop_assert!(!ce[i] || core[i]);
            prop_assert!(!core[i] || whole[i]);
            prop_assert_eq!(whole[i], map.labels()[i] != 0);
        }
    }

    #[test]
    fn exact_wilcoxon_matches_enumeration(d in diffs(10)) {
        let r = wilcoxon_one_sided(&d).unwrap();
        prop_assert!((r.p_value - brute_force_p(&d)).abs() < 1e-12);
        prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn wilcoxon_depends_only_on_signed_ranks(d in diffs(30), scale in 0.01f64..100.0) {
        // A strictly increasing odd map keeps signs and the ordering of |d|.
        let warped: Vec<f64> = d.iter().map(|x| scale * x * x * x + x).collect();
        let a = wilcoxon_one_sided(&d).unwrap();
        let b = wilcoxon_one_sided(&warped).unwrap();
        prop_assert_eq!(a.w_statistic, b.w_statistic);
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn better_ratio_invariant_under_monotone_maps(
        pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40),
    ) {
        let (v, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let f = |x: &f64| (3.0 * x).exp() - 1.0;
        let r = better_ratio(&v, &b).unwrap();
        prop_assert_eq!(r, better_ratio(&v.iter().map(f).collect::<Vec<_>>(), &b.iter().map(f).collect::<Vec<_>>()).unwrap());
        prop_assert!((0.0..=100.0).contains(&r));
        // Swapping arms can only lose ties.
        prop_assert!(r + better_ratio(&b, &v).unwrap() <= 100.0 + 1e-9);
    }

    #[test]
    fn comparison_ignores_subject_order(
        scores in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..20),
        seed in any::<u64>(),
    ) {
        let mut table = ScoreTable::default();
        let mut ids: Vec<String> = (0..scores.len()).map(|i| format!("s{i:02}")).collect();
        for (id, (v, b)) in ids.iter().zip(&scores) {
            for region in RegionKind::ALL {
                table.insert(id, Regime::TypeAware, 0, 1, region, *v);
                table.insert(id, Regime::Baseline, 0, 1, region, *b);
            }
        }
        let arm = Arm::Regime(Regime::TypeAware);
        let base = Arm::Regime(Regime::Baseline);
        let first = compare(&table, arm, base, &ids, 1).unwrap();
        let k = (seed % ids.len() as u64) as usize;
        ids.rotate_left(k);
        ids.reverse();
        prop_assert_eq!(first, compare(&table, arm, base, &ids, 1).unwrap());
    }

    #[test]
    fn injection_appends_constant_plane(
        (c, h, w) in (1usize..=4, 1usize..12, 1usize..12),
        values in prop::collection::vec(-1e6f32..1e6, 4 * 11 * 11),
        hgg in any::<bool>(),
    ) {
        let data = values[..c * h * w].to_vec();
        let grade = if hgg { Grade::Hgg } else { Grade::Lgg };
        let out = inject_grade_channel(&Volume::new(c, h, w, data.clone()).unwrap(), grade);
        prop_assert_eq!(out.channels(), c + 1);
        prop_assert_eq!(&out.data()[..c * h * w], &data[..]);
        prop_assert!(out.plane(c).iter().all(|&x| x == grade.injection_value()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn folds_partition_each_grade(k in 2usize..6, seed in any::<u64>()) {
        let cfg = PhantomConfig::default().resized(8);
        let cohort = generate_cohort(&cfg, 13, 7).unwrap();
        let plan = make_folds(&cohort, k, seed).unwrap();
        for grade in Grade::ALL {
            let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
            for s in cohort.iter().filter(|s| s.grade == grade) {
                *sizes.entry(plan.fold_of(&s.id).unwrap()).or_default() += 1;
            }
            prop_assert_eq!(sizes.len(), k);
            let (lo, hi) = (sizes.values().min().unwrap(), sizes.values().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}
