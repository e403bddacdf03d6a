//! Walk-forward (expanding window) splits.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

/// Divides rows `[min_train, t)` into `n_folds` equal validation blocks; fold
/// `k` trains on every row before its block. Leftover rows (when the
/// remainder is not divisible) are absorbed by the first training window.
pub fn walk_forward_splits(t: usize, n_folds: usize, min_train: usize) -> Result<SplitPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    if min_train == 0 || min_train + n_folds > t {
        return Err(Error::InsufficientData(format!(
            "{t} rows cannot hold {min_train} training rows plus {n_folds} folds"
        )));
    }
    let block = (t - min_train) / n_folds;
    let start = t - block * n_folds;
    let folds = (0..n_folds)
        .map(|k| {
            let v0 = start + k * block;
            Fold {
                train: 0..v0,
                validation: v0..v0 + block,
            }
        })
        .collect();
    Ok(SplitPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_blocks() {
        let plan = walk_forward_splits(100, 5, 50).unwrap();
        assert_eq!(plan.len(), 5);
        assert_eq!(plan.folds[0].train, 0..50);
        for f in &plan.folds {
            assert_eq!(f.validation.len(), 10);
        }
        assert_eq!(plan.folds[4].validation, 90..100);
    }

    #[test]
    fn insufficient_data() {
        assert!(walk_forward_splits(10, 5, 9).is_err());
        assert!(walk_forward_splits(10, 1, 2).is_err());
    }

    #[test]
    fn never_leaks_exhaustive() {
        for t in 20..=200 {
            for n_folds in 2..=6 {
                for min_train in [1, 5, t / 2, t - n_folds] {
                    let plan = walk_forward_splits(t, n_folds, min_train).unwrap();
                    let mut prev_end = 0;
                    for f in &plan.folds {
                        assert!(f.train.end <= f.validation.start);
                        assert!(f.train.end >= min_train);
                        assert!(f.validation.start >= prev_end);
                        assert!(!f.validation.is_empty());
                        assert!(f.validation.end <= t);
                        prev_end = f.validation.end;
                    }
                    assert_eq!(prev_end, t);
                }
            }
        }
    }
}
