use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{rng::stream, Matrix, Rng, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Labelled feature rows, features scaled to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Matrix<f64>, labels: Vec<usize>, n_classes: usize, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Data(format!("label {bad} outside {n_classes} classes")));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Rows `idx` as a feature batch in precision `T` plus their labels.
    pub fn batch<T: Scalar>(&self, idx: &[usize]) -> (Matrix<T>, Vec<usize>) {
        let x = self.features.select_rows(idx).cast();
        let y = idx.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    pub fn subset(&self, idx: &[usize], split: Split) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            split,
        }
    }
}

/// Seeded permutation split into (train, val); `val` receives
/// round(val_fraction · n) samples.
pub fn split(dataset: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::config(format!(
            "validation fraction {val_fraction} outside [0, 1)"
        )));
    }
    let n = dataset.len();
    let n_val = (val_fraction * n as f64).round() as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    Rng::derive(seed, &[stream::SPLIT]).shuffle(&mut perm);
    let (val_idx, train_idx) = perm.split_at(n_val);
    let mut val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((
        dataset.subset(&train_idx, Split::Train),
        dataset.subset(&val_idx, Split::Val),
    ))
}

/// Minibatch layout for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub drop_last: bool,
}

impl BatchPlan {
    pub fn new(batch_size: usize) -> Self {
        BatchPlan {
            batch_size,
            drop_last: false,
        }
    }

    /// Optimizer steps per epoch over `n` samples.
    pub fn batches_per_epoch(&self, n: usize) -> usize {
        if self.drop_last {
            n / self.batch_size
        } else {
            n.div_ceil(self.batch_size)
        }
    }
}

/// Index batches for `epoch`: a fresh permutation seeded by (run_seed, epoch).
pub fn batches(n: usize, plan: &BatchPlan, run_seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if plan.batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    Rng::derive(run_seed, &[stream::SHUFFLE, epoch as u64]).shuffle(&mut perm);
    let mut out: Vec<Vec<usize>> = perm.chunks(plan.batch_size).map(<[usize]>::to_vec).collect();
    if plan.drop_last && out.last().is_some_and(|b| b.len() < plan.batch_size) {
        out.pop();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let f = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64 / n as f64).collect()).unwrap();
        Dataset::new(f, (0..n).map(|i| i % 3).collect(), 3, Split::Train).unwrap()
    }

    #[test]
    fn batch_sizes() {
        let b = batches(10, &BatchPlan::new(3), 1, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert_eq!(batches(10, &BatchPlan::new(10), 1, 0).unwrap().len(), 1);
        let drop = BatchPlan {
            batch_size: 3,
            drop_last: true,
        };
        assert_eq!(batches(10, &drop, 1, 0).unwrap().len(), 3);
        assert_eq!(drop.batches_per_epoch(10), 3);
        assert_eq!(BatchPlan::new(3).batches_per_epoch(10), 4);
    }

    #[test]
    fn epochs_reshuffle_deterministically() {
        let a = batches(50, &BatchPlan::new(50), 9, 0).unwrap();
        assert_eq!(a, batches(50, &BatchPlan::new(50), 9, 0).unwrap());
        assert_ne!(a, batches(50, &BatchPlan::new(50), 9, 1).unwrap());
    }

    #[test]
    fn split_sizes() {
        let d = toy(50);
        let (tr, va) = split(&d, 0.0, 3).unwrap();
        assert!(va.is_empty());
        assert_eq!(tr.len(), 50);
        let (tr, va) = split(&d, 0.1, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (45, 5));
        assert!(split(&d, 1.0, 3).is_err());
    }

    #[test]
    fn rejects_bad_labels() {
        let f = Matrix::zeros(2, 1);
        assert!(Dataset::new(f.clone(), vec![0, 3], 3, Split::Train).is_err());
        assert!(Dataset::new(f, vec![0], 3, Split::Train).is_err());
    }
}
