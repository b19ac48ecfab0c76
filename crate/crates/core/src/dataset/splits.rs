//! Seeded, reproducible dataset splits. Ids are sorted before shuffling so
//! plans are independent of input ordering.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitKind {
    Holdout {
        ratio: (u32, u32),
        train: Vec<String>,
        val: Vec<String>,
    },
    KFold {
        k: usize,
        folds: Vec<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    #[serde(flatten)]
    pub kind: SplitKind,
}

impl SplitPlan {
    /// For k-fold plans: yield `(train, val)` id lists per fold.
    pub fn fold_iter(&self) -> Vec<(Vec<String>, Vec<String>)> {
        match &self.kind {
            SplitKind::Holdout { train, val, .. } => {
                vec![(train.clone(), val.clone())]
            }
            SplitKind::KFold { folds, .. } => (0..folds.len())
                .map(|i| {
                    let val = folds[i].clone();
                    let train = folds
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .flat_map(|(_, f)| f.iter().cloned())
                        .collect();
                    (train, val)
                })
                .collect(),
        }
    }
}

fn shuffled_ids(ids: &[String], seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = ids.to_vec();
    ids.sort();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids
}

/// Seeded shuffle then prefix split; the validation share is
/// `floor(n * b / (a + b))`.
pub fn split_ids(ids: &[String], ratio: (u32, u32), seed: u64) -> Result<SplitPlan> {
    if ids.len() < 2 {
        return Err(Error::Protocol(format!(
            "need at least 2 samples to split, got {}",
            ids.len()
        )));
    }
    if ratio.0 == 0 || ratio.1 == 0 {
        return Err(Error::Config(format!("degenerate split ratio {ratio:?}")));
    }
    let shuffled = shuffled_ids(ids, seed);
    let n = shuffled.len();
    let n_val = n * ratio.1 as usize / (ratio.0 + ratio.1) as usize;
    let (train, val) = shuffled.split_at(n - n_val);
    Ok(SplitPlan {
        seed,
        kind: SplitKind::Holdout { ratio, train: train.to_vec(), val: val.to_vec() },
    })
}

pub fn split_dataset(samples: &[Sample], ratio: (u32, u32), seed: u64) -> Result<SplitPlan> {
    let ids: Vec<String> = samples.iter().map(|s| s.image_id.clone()).collect();
    split_ids(&ids, ratio, seed)
}

/// Seeded partition into `k` folds whose sizes differ by at most one; the
/// first `n % k` folds take the extra sample.
pub fn kfold_ids(ids: &[String], k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::Protocol(format!(
            "need at least {k} samples for {k}-fold, got {}",
            ids.len()
        )));
    }
    let shuffled = shuffled_ids(ids, seed);
    let n = shuffled.len();
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0usize;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(shuffled[at..at + len].to_vec());
        at += len;
    }
    Ok(SplitPlan { seed, kind: SplitKind::KFold { k, folds } })
}

pub fn kfold_split(samples: &[Sample], k: usize, seed: u64) -> Result<SplitPlan> {
    let ids: Vec<String> = samples.iter().map(|s| s.image_id.clone()).collect();
    kfold_ids(&ids, k, seed)
}
