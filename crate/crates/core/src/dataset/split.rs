//! Stratified train/test splits and cross-validation folds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetError, NUM_CLASSES};
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

fn class_members(labels: &[u8]) -> Result<[Vec<usize>; NUM_CLASSES], DatasetError> {
    let mut members: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        let slot = members.get_mut(l as usize).ok_or(DatasetError::InvalidLabel(l))?;
        slot.push(i);
    }
    Ok(members)
}

/// Per-class random split: each class sends `round(n_c * test_fraction)`
/// of its records to the test set.
pub fn stratified_split(labels: &[u8], test_fraction: f64, seed: u64) -> Result<Vec<Split>, DatasetError> {
    if labels.is_empty() {
        return Err(DatasetError::Invalid("cannot split an empty record list".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::Invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let members = class_members(labels)?;
    let mut out = vec![Split::Train; labels.len()];
    for (class, idx) in members.iter().enumerate() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng::stream(seed, &[tag::SPLIT, class as u64]));
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        for &i in &idx[..n_test] {
            out[i] = Split::Test;
        }
    }
    check_nonempty(&out)?;
    Ok(out)
}

/// Hold out whole vessels: vessels are shuffled and moved to the test set
/// until it holds at least `test_fraction` of the records.
pub fn vessel_split(vessels: &[&str], test_fraction: f64, seed: u64) -> Result<Vec<Split>, DatasetError> {
    if vessels.is_empty() {
        return Err(DatasetError::Invalid("cannot split an empty record list".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::Invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let groups = group_indices(vessels);
    let mut names: Vec<&str> = groups.keys().copied().collect();
    names.shuffle(&mut rng::stream(seed, &[tag::SPLIT, 0xFE55]));
    let target = (vessels.len() as f64 * test_fraction).round() as usize;
    let mut out = vec![Split::Train; vessels.len()];
    let mut n_test = 0;
    for name in names {
        if n_test >= target {
            break;
        }
        for &i in &groups[name] {
            out[i] = Split::Test;
            n_test += 1;
        }
    }
    check_nonempty(&out)?;
    Ok(out)
}

fn check_nonempty(splits: &[Split]) -> Result<(), DatasetError> {
    let n_test = splits.iter().filter(|&&s| s == Split::Test).count();
    if n_test == 0 || n_test == splits.len() {
        return Err(DatasetError::Invalid(format!(
            "split of {} records leaves the train or test set empty",
            splits.len()
        )));
    }
    Ok(())
}

fn group_indices<'a>(keys: &[&'a str]) -> BTreeMap<&'a str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    groups
}

/// Fold ids for the training records, plus any balance warnings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    pub folds: Vec<usize>,
    pub k: usize,
    pub warnings: Vec<String>,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold: each class is shuffled and dealt round-robin, with the
/// starting fold carried over between classes so total fold sizes stay level.
pub fn kfold_assign(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment, DatasetError> {
    if k < 2 {
        return Err(DatasetError::Invalid(format!("k = {k}; need at least 2 folds")));
    }
    if labels.len() < k {
        return Err(DatasetError::Invalid(format!(
            "{} training records cannot fill {k} folds",
            labels.len()
        )));
    }
    let members = class_members(labels)?;
    let mut folds = vec![0; labels.len()];
    let mut warnings = Vec::new();
    let mut next = 0usize;
    for (class, idx) in members.iter().enumerate() {
        if !idx.is_empty() && idx.len() < k {
            warnings.push(format!(
                "class {class} has {} records for {k} folds; some folds lack it",
                idx.len()
            ));
        }
        let mut idx = idx.clone();
        idx.shuffle(&mut rng::stream(seed, &[tag::FOLD, class as u64]));
        for i in idx {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { folds, k, warnings })
}

/// Vessel-grouped folds: whole vessels are placed, largest first, into the
/// currently smallest fold.
pub fn kfold_assign_grouped(vessels: &[&str], k: usize, seed: u64) -> Result<FoldAssignment, DatasetError> {
    if k < 2 {
        return Err(DatasetError::Invalid(format!("k = {k}; need at least 2 folds")));
    }
    let groups = group_indices(vessels);
    if groups.len() < k {
        return Err(DatasetError::Invalid(format!(
            "{} vessels cannot fill {k} vessel-grouped folds",
            groups.len()
        )));
    }
    let mut order: Vec<(&str, &Vec<usize>)> = groups.iter().map(|(k, v)| (*k, v)).collect();
    order.shuffle(&mut rng::stream(seed, &[tag::FOLD, 0xFE55]));
    order.sort_by_key(|g| std::cmp::Reverse(g.1.len()));
    let mut sizes = vec![0usize; k];
    let mut folds = vec![0; vessels.len()];
    for (_, idx) in order {
        let (target, _) = sizes.iter().enumerate().min_by_key(|(f, s)| (**s, *f)).expect("k >= 2");
        for &i in idx {
            folds[i] = target;
        }
        sizes[target] += idx.len();
    }
    Ok(FoldAssignment {
        folds,
        k,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divisible_split_is_exact_per_class() {
        let labels: Vec<u8> = (0..300).map(|i| (i % 3) as u8).collect();
        let split = stratified_split(&labels, 0.2, 5).unwrap();
        for c in 0..3u8 {
            let n = labels
                .iter()
                .zip(&split)
                .filter(|(&l, &s)| l == c && s == Split::Test)
                .count();
            assert_eq!(n, 20);
        }
        assert_eq!(split, stratified_split(&labels, 0.2, 5).unwrap());
        assert_ne!(split, stratified_split(&labels, 0.2, 6).unwrap());
    }

    #[test]
    fn degenerate_splits_are_rejected() {
        assert!(stratified_split(&[1], 0.5, 0).is_err());
        assert!(stratified_split(&[], 0.5, 0).is_err());
        assert!(stratified_split(&[0, 1, 2], 1.0, 0).is_err());
        assert!(stratified_split(&[0, 7], 0.5, 0).is_err());
    }

    #[test]
    fn single_class_kfold_sizes() {
        let f = kfold_assign(&[1; 10], 5, 3).unwrap();
        assert_eq!(f.fold_sizes(), vec![2; 5]);
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn kfold_rejects_bad_k() {
        assert!(kfold_assign(&[0, 1, 2], 1, 0).is_err());
        assert!(kfold_assign(&[0, 1, 2], 4, 0).is_err());
    }

    #[test]
    fn sparse_class_produces_warning() {
        let mut labels = vec![0u8; 20];
        labels.extend([2, 2]);
        let f = kfold_assign(&labels, 5, 0).unwrap();
        assert_eq!(f.warnings.len(), 1);
    }

    #[test]
    fn vessel_split_keeps_vessels_whole() {
        let vessels: Vec<String> = (0..100).map(|i| format!("V{}", i % 7)).collect();
        let refs: Vec<&str> = vessels.iter().map(|s| s.as_str()).collect();
        let split = vessel_split(&refs, 0.2, 1).unwrap();
        for v in 0..7 {
            let sides: std::collections::HashSet<_> = refs
                .iter()
                .zip(&split)
                .filter(|(name, _)| **name == format!("V{v}"))
                .map(|(_, s)| *s)
                .collect();
            assert_eq!(sides.len(), 1);
        }
        let folds = kfold_assign_grouped(&refs, 3, 1).unwrap();
        let mut by_vessel = BTreeMap::new();
        for (v, f) in refs.iter().zip(&folds.folds) {
            assert_eq!(*by_vessel.entry(*v).or_insert(*f), *f);
        }
    }
}
