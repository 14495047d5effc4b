use super::LearnError;
use crate::dataset::Dataset;
use crate::seed;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Indices into the dataset, each list sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits items grouped by `cell` so that every cell contributes
/// `round(train_frac · size)` items to train and the rest to test.
pub fn stratified_splits<K: Ord + Clone + std::fmt::Debug>(
    cells: &[K],
    n_splits: usize,
    train_frac: f64,
    seed_v: u64,
) -> Result<Vec<Split>, LearnError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(LearnError::InvalidConfig(format!("train_frac {train_frac} must be in (0, 1)")));
    }
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in cells.iter().enumerate() {
        groups.entry(k.clone()).or_default().push(i);
    }
    if groups.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    let mut quotas = Vec::with_capacity(groups.len());
    for (k, members) in &groups {
        let n_train = (train_frac * members.len() as f64).round() as usize;
        if n_train == 0 || n_train >= members.len() {
            return Err(LearnError::CellTooSmall {
                cell: format!("{k:?}"),
                size: members.len(),
            });
        }
        quotas.push(n_train);
    }

    let mut out: Vec<Split> = Vec::with_capacity(n_splits);
    let mut attempt = 0u64;
    while out.len() < n_splits {
        let mut rng = seed::rng(seed::derive(seed_v, attempt));
        attempt += 1;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (members, &q) in groups.values().zip(&quotas) {
            let mut m = members.clone();
            m.shuffle(&mut rng);
            train.extend_from_slice(&m[..q]);
            test.extend_from_slice(&m[q..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        let split = Split { train, test };
        // a handful of retries keeps splits distinct without looping forever on
        // tiny cells where every partition has been seen
        if out.contains(&split) && attempt < (n_splits as u64) * 8 + 16 {
            continue;
        }
        out.push(split);
    }
    Ok(out)
}

/// Stratified train/test splits over (word, speaker) cells.
pub fn make_splits(
    ds: &Dataset,
    n_splits: usize,
    train_frac: f64,
    seed_v: u64,
) -> Result<Vec<Split>, LearnError> {
    let cells: Vec<(usize, u8)> = ds.utterances.iter().map(|u| (u.word.id(), u.speaker)).collect();
    stratified_splits(&cells, n_splits, train_frac, seed_v)
}
