use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::dataset::{Grade, Subject};
use crate::error::{Error, Result};
use crate::seeds;

/// Assignment of every subject to one of `k` test folds, shared by all regimes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    /// Ids in `fold`, sorted.
    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignment.iter().filter(|(_, &f)| f == fold).map(|(id, _)| id.as_str()).collect()
    }
}

/// Grade-stratified k-fold partition: within each grade, subjects are
/// shuffled with `seed` and dealt round-robin, so per-grade fold sizes differ
/// by at most one.
pub fn make_folds(cohort: &[Subject], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut assignment = BTreeMap::new();
    for grade in Grade::ALL {
        let mut ids: Vec<&str> = cohort.iter().filter(|s| s.grade == grade).map(|s| s.id.as_str()).collect();
        if ids.len() < k {
            return Err(Error::Config(format!("{} {grade} subjects cannot fill {k} folds", ids.len())));
        }
        ids.sort_unstable();
        ids.shuffle(&mut seeds::rng(seed, &[seeds::FOLDS, grade.as_str()]));
        for (i, id) in ids.into_iter().enumerate() {
            if assignment.insert(id.to_string(), i % k).is_some() {
                return Err(Error::Config(format!("duplicate subject id {id}")));
            }
        }
    }
    Ok(FoldPlan { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabelMap, Volume};

    fn cohort(n_hgg: usize, n_lgg: usize) -> Vec<Subject> {
        let mk = |id: String, grade| {
            Subject::new(id, grade, Volume::new(1, 1, 1, vec![0.0]).unwrap(), LabelMap::new(1, 1, vec![0]).unwrap())
                .unwrap()
        };
        (0..n_hgg)
            .map(|i| mk(format!("HGG_{i:04}"), Grade::Hgg))
            .chain((0..n_lgg).map(|i| mk(format!("LGG_{i:04}"), Grade::Lgg)))
            .collect()
    }

    #[test]
    fn stratified_fold_sizes() {
        let c = cohort(10, 5);
        let plan = make_folds(&c, 5, 1).unwrap();
        for f in 0..5 {
            let m = plan.members(f);
            assert_eq!(m.iter().filter(|id| id.starts_with("HGG")).count(), 2);
            assert_eq!(m.iter().filter(|id| id.starts_with("LGG")).count(), 1);
        }
        assert_eq!(plan.assignment.len(), 15);
    }

    #[test]
    fn deterministic_in_seed() {
        let c = cohort(12, 7);
        assert_eq!(make_folds(&c, 5, 3).unwrap(), make_folds(&c, 5, 3).unwrap());
        assert_ne!(make_folds(&c, 5, 3).unwrap(), make_folds(&c, 5, 4).unwrap());
    }

    #[test]
    fn too_few_subjects() {
        let err = make_folds(&cohort(10, 4), 5, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("4 LGG"), "{err}");
    }
}
