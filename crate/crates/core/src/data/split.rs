//! Stratified labeled/unlabeled split.
//!
//! The labeled budget is `round(fraction * N)` examples, shared equally
//! across classes; the remainder `budget mod C` goes one each to the lowest
//! class indices. Within each class the labeled rows are a seeded random
//! choice. Both parts keep the original row order. `fraction == 1` labels
//! everything regardless of class balance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, SealedLabels};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SemiSupervisedSplit {
    pub labeled: Dataset,
    /// Labels hidden; ground truth kept in [`Dataset::sealed`].
    pub unlabeled: Option<Dataset>,
    /// Original row indices of each part.
    pub labeled_rows: Vec<usize>,
    pub unlabeled_rows: Vec<usize>,
}

pub fn split_semisup(dataset: &Dataset, labeled_fraction: f64, seed: u64) -> Result<SemiSupervisedSplit> {
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "labeled fraction must lie in (0, 1], got {labeled_fraction}"
        )));
    }
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::invalid("cannot split a dataset without labels"))?;
    let n = dataset.len();
    let classes = dataset.class_count;

    let mut labeled_rows = if labeled_fraction == 1.0 {
        (0..n).collect::<Vec<_>>()
    } else {
        let budget = (labeled_fraction * n as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(budget);
        for class in 0..classes {
            let quota = budget / classes + usize::from(class < budget % classes);
            if quota == 0 {
                return Err(Error::invalid(format!(
                    "labeled fraction {labeled_fraction} of {n} rows leaves class {class} without labels"
                )));
            }
            let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            if members.len() < quota {
                return Err(Error::invalid(format!(
                    "class {class} has {} rows, fewer than its labeled quota {quota}",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            rows.extend_from_slice(&members[..quota]);
        }
        rows
    };
    labeled_rows.sort_unstable();

    let mut is_labeled = vec![false; n];
    for &i in &labeled_rows {
        is_labeled[i] = true;
    }
    let unlabeled_rows: Vec<usize> = (0..n).filter(|&i| !is_labeled[i]).collect();

    let labeled = dataset.subset(&labeled_rows)?;
    let unlabeled = if unlabeled_rows.is_empty() {
        None
    } else {
        let mut u = dataset.subset(&unlabeled_rows)?;
        u.sealed = u.labels.take().map(SealedLabels::new);
        Some(u)
    };
    Ok(SemiSupervisedSplit {
        labeled,
        unlabeled,
        labeled_rows,
        unlabeled_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind};

    #[test]
    fn full_fraction_leaves_nothing_unlabeled() {
        let ds = gen_synthetic(SyntheticKind::TwoMoons, 31, 0.0, 1).unwrap();
        let s = split_semisup(&ds, 1.0, 0).unwrap();
        assert!(s.unlabeled.is_none());
        assert_eq!(s.labeled.len(), 31);
    }

    #[test]
    fn stratified_counts() {
        let ds = gen_synthetic(SyntheticKind::TwoMoons, 1000, 0.05, 1).unwrap();
        let s = split_semisup(&ds, 0.08, 4).unwrap();
        let l = s.labeled.labels.as_ref().unwrap();
        assert_eq!(l.iter().filter(|&&c| c == 0).count(), 40);
        assert_eq!(l.iter().filter(|&&c| c == 1).count(), 40);
        let u = s.unlabeled.unwrap();
        assert!(u.labels.is_none());
        assert_eq!(u.sealed.unwrap().reveal_for_evaluation().len(), 920);
    }

    #[test]
    fn deterministic_partition() {
        let ds = gen_synthetic(SyntheticKind::GaussianBlobs, 200, 0.05, 1).unwrap();
        let a = split_semisup(&ds, 0.1, 7).unwrap();
        let b = split_semisup(&ds, 0.1, 7).unwrap();
        assert_eq!(a.labeled_rows, b.labeled_rows);
        let mut all: Vec<usize> = a.labeled_rows.iter().chain(&a.unlabeled_rows).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn starving_a_class_is_rejected() {
        let ds = gen_synthetic(SyntheticKind::TwoMoons, 100, 0.0, 1).unwrap();
        assert!(split_semisup(&ds, 0.01, 0).is_err());
        assert!(split_semisup(&ds, 0.0, 0).is_err());
        assert!(split_semisup(&ds, 1.5, 0).is_err());
    }
}
