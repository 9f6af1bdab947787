//! Paired regime comparisons: better-subject ratio and one-sided Wilcoxon.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::regions::RegionKind;
use super::scores::ScoreTable;
use super::wilcoxon::wilcoxon_one_sided;
use crate::dataset::Grade;
use crate::error::{Error, Result};
use crate::training::Regime;

/// Significance threshold on the one-sided p-value.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// One side of a comparison: a single regime, or the stratified pair where
/// each subject is scored by the model trained on its own grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Regime(Regime),
    Stratified,
}

impl Arm {
    pub fn score(&self, table: &ScoreTable, subject: &str, epoch: usize, region: RegionKind) -> Option<f64> {
        match self {
            Arm::Regime(r) => table.get(subject, *r, epoch, region),
            Arm::Stratified => table
                .get(subject, Regime::HggOnly, epoch, region)
                .or_else(|| table.get(subject, Regime::LggOnly, epoch, region)),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::Regime(r) => write!(f, "{r}"),
            Arm::Stratified => f.write_str("stratified"),
        }
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "stratified" {
            return Ok(Arm::Stratified);
        }
        s.parse().map(Arm::Regime)
    }
}

/// Which subjects enter a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubjectSet {
    Hgg,
    Lgg,
    All,
}

impl SubjectSet {
    pub fn select(self, grades: &BTreeMap<String, Grade>) -> Vec<String> {
        grades
            .iter()
            .filter(|(_, &g)| match self {
                SubjectSet::Hgg => g == Grade::Hgg,
                SubjectSet::Lgg => g == Grade::Lgg,
                SubjectSet::All => true,
            })
            .map(|(id, _)| id.clone())
            .collect()
    }
}

impl fmt::Display for SubjectSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubjectSet::Hgg => "hgg",
            SubjectSet::Lgg => "lgg",
            SubjectSet::All => "all",
        })
    }
}

impl FromStr for SubjectSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hgg" => Ok(SubjectSet::Hgg),
            "lgg" => Ok(SubjectSet::Lgg),
            "all" => Ok(SubjectSet::All),
            _ => Err(Error::Argument(format!("unknown subject set {s:?} (hgg, lgg, all)"))),
        }
    }
}

/// The four headline comparisons against the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    LggVsBaseline,
    HggVsBaseline,
    StratifiedVsBaseline,
    TypeAwareVsBaseline,
}

impl Comparison {
    pub const ALL: [Comparison; 4] = [
        Comparison::LggVsBaseline,
        Comparison::HggVsBaseline,
        Comparison::StratifiedVsBaseline,
        Comparison::TypeAwareVsBaseline,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Comparison::LggVsBaseline => "LGG vs. Baseline",
            Comparison::HggVsBaseline => "HGG vs. Baseline",
            Comparison::StratifiedVsBaseline => "HGG/LGG vs. Baseline",
            Comparison::TypeAwareVsBaseline => "Type-aware vs. Baseline",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            Comparison::LggVsBaseline => "lgg_vs_baseline",
            Comparison::HggVsBaseline => "hgg_vs_baseline",
            Comparison::StratifiedVsBaseline => "hgg_lgg_vs_baseline",
            Comparison::TypeAwareVsBaseline => "type_aware_vs_baseline",
        }
    }

    pub fn variant(self) -> Arm {
        match self {
            Comparison::LggVsBaseline => Arm::Regime(Regime::LggOnly),
            Comparison::HggVsBaseline => Arm::Regime(Regime::HggOnly),
            Comparison::StratifiedVsBaseline => Arm::Stratified,
            Comparison::TypeAwareVsBaseline => Arm::Regime(Regime::TypeAware),
        }
    }

    pub fn baseline(self) -> Arm {
        Arm::Regime(Regime::Baseline)
    }

    pub fn subjects(self) -> SubjectSet {
        match self {
            Comparison::LggVsBaseline => SubjectSet::Lgg,
            Comparison::HggVsBaseline => SubjectSet::Hgg,
            _ => SubjectSet::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonResult {
    pub region: RegionKind,
    pub n: usize,
    /// Percentage of subjects where the variant is strictly better.
    pub better_ratio: f64,
    pub w_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// `100 * #{variant_i > baseline_i} / n`; ties only count in the denominator.
pub fn better_ratio(variant: &[f64], baseline: &[f64]) -> Result<f64> {
    if variant.len() != baseline.len() {
        return Err(Error::Pairing(format!("{} variant scores vs {} baseline scores", variant.len(), baseline.len())));
    }
    if variant.is_empty() {
        return Err(Error::Pairing("no paired scores".into()));
    }
    let better = variant.iter().zip(baseline).filter(|(v, b)| v > b).count();
    Ok(100.0 * better as f64 / variant.len() as f64)
}

fn paired(
    table: &ScoreTable,
    variant: Arm,
    baseline: Arm,
    subjects: &[String],
    epoch: usize,
    region: RegionKind,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ids: Vec<&String> = subjects.iter().collect();
    ids.sort();
    ids.dedup();
    let mut v = Vec::with_capacity(ids.len());
    let mut b = Vec::with_capacity(ids.len());
    for id in ids {
        let missing =
            |arm: Arm| Error::Pairing(format!("subject {id} has no {arm} score for {region} at epoch {epoch}"));
        v.push(variant.score(table, id, epoch, region).ok_or_else(|| missing(variant))?);
        b.push(baseline.score(table, id, epoch, region).ok_or_else(|| missing(baseline))?);
    }
    Ok((v, b))
}

/// Compares `variant` against `baseline` on `subjects` at `epoch`, one
/// result per region.
pub fn compare(
    table: &ScoreTable,
    variant: Arm,
    baseline: Arm,
    subjects: &[String],
    epoch: usize,
) -> Result<Vec<ComparisonResult>> {
    RegionKind::ALL
        .iter()
        .map(|&region| {
            let (v, b) = paired(table, variant, baseline, subjects, epoch, region)?;
            let diffs: Vec<f64> = v.iter().zip(&b).map(|(x, y)| x - y).collect();
            let test = wilcoxon_one_sided(&diffs)?;
            Ok(ComparisonResult {
                region,
                n: v.len(),
                better_ratio: better_ratio(&v, &b)?,
                w_statistic: test.w_statistic,
                p_value: test.p_value,
                significant: test.p_value < SIGNIFICANCE_LEVEL,
            })
        })
        .collect()
}

/// Better-subject ratio at every epoch in the table.
pub fn per_epoch_curves(
    table: &ScoreTable,
    variant: Arm,
    baseline: Arm,
    subjects: &[String],
    region: RegionKind,
) -> Result<Vec<(usize, f64)>> {
    table
        .epochs()
        .into_iter()
        .map(|epoch| {
            let (v, b) = paired(table, variant, baseline, subjects, epoch, region)?;
            Ok((epoch, better_ratio(&v, &b)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn better_ratio_examples() {
        let r = better_ratio(&[0.9, 0.8, 0.7], &[0.85, 0.85, 0.6]).unwrap();
        assert!((r - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{r:.1}"), "66.7");
        assert_eq!(better_ratio(&[0.5, 0.6], &[0.5, 0.6]).unwrap(), 0.0);
        assert_eq!(better_ratio(&[1.0; 4], &[0.5; 4]).unwrap(), 100.0);
        assert!(matches!(better_ratio(&[1.0], &[1.0, 2.0]), Err(Error::Pairing(_))));
    }

    fn table() -> ScoreTable {
        let mut t = ScoreTable::default();
        let ids = ["HGG_0000", "HGG_0001", "LGG_0000"];
        for epoch in 1..=2 {
            for (i, id) in ids.iter().enumerate() {
                for region in RegionKind::ALL {
                    t.insert(id, Regime::Baseline, 0, epoch, region, 0.5);
                    t.insert(id, Regime::TypeAware, 0, epoch, region, 0.5 + 0.1 * i as f64);
                    let own = if id.starts_with("HGG") { Regime::HggOnly } else { Regime::LggOnly };
                    t.insert(id, own, 0, epoch, region, 0.9);
                }
            }
        }
        t
    }

    fn all() -> Vec<String> {
        vec!["HGG_0000".into(), "HGG_0001".into(), "LGG_0000".into()]
    }

    #[test]
    fn self_comparison_is_neutral() {
        let t = table();
        let base = Arm::Regime(Regime::Baseline);
        for r in compare(&t, base, base, &all(), 2).unwrap() {
            assert_eq!((r.better_ratio, r.p_value, r.significant), (0.0, 1.0, false));
        }
        let curve = per_epoch_curves(&t, base, base, &all(), RegionKind::Core).unwrap();
        assert_eq!(curve, vec![(1, 0.0), (2, 0.0)]);
    }

    #[test]
    fn stratified_arm_routes_by_grade() {
        let t = table();
        let res = compare(&t, Arm::Stratified, Arm::Regime(Regime::Baseline), &all(), 1).unwrap();
        assert_eq!(res.len(), 3);
        assert_eq!(res[0].better_ratio, 100.0);
        assert_eq!(res[0].p_value, 0.125);
        let curve =
            per_epoch_curves(&t, Arm::Stratified, Arm::Regime(Regime::Baseline), &all(), RegionKind::Ce).unwrap();
        assert_eq!(curve, vec![(1, 100.0), (2, 100.0)]);
    }

    #[test]
    fn missing_pair_names_subject() {
        let t = table();
        let err = compare(&t, Arm::Regime(Regime::HggOnly), Arm::Regime(Regime::Baseline), &all(), 1).unwrap_err();
        assert!(matches!(err, Error::Pairing(_)));
        assert!(err.to_string().contains("LGG_0000"), "{err}");
    }

    #[test]
    fn order_of_subjects_does_not_matter() {
        let t = table();
        let mut rev = all();
        rev.reverse();
        let arm = Arm::Regime(Regime::TypeAware);
        let base = Arm::Regime(Regime::Baseline);
        assert_eq!(compare(&t, arm, base, &all(), 2).unwrap(), compare(&t, arm, base, &rev, 2).unwrap());
    }

    #[test]
    fn arm_parsing() {
        assert_eq!("stratified".parse::<Arm>().unwrap(), Arm::Stratified);
        assert_eq!("type_aware".parse::<Arm>().unwrap(), Arm::Regime(Regime::TypeAware));
        assert!("nope".parse::<Arm>().is_err());
    }
}
