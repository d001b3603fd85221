//! Dataset spec strings.
//!
//! ```text
//! synth[:classes=10,features=784,train_per_class=600,test_per_class=100,spread=0.15,informative=K,binary=Q,modes=M,seed=S]
//! idx:DIR                      (train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-*)
//! idx:train_images=P,train_labels=P,test_images=P,test_labels=P
//! csv:train=P,test=P
//! ```
//!
//! The training file is split into train/val by `val_fraction` and `data_seed`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::{load_csv, load_idx, split, BlobSpec, Dataset, Split};
use crate::error::{Error, Result};

/// The three splits every run trains and evaluates on.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Synth {
        spec: BlobSpec,
        train_per_class: usize,
        test_per_class: usize,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
    },
}

fn kv(body: &str) -> Result<BTreeMap<String, String>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::config(format!("dataset option {pair:?} is not key=value")))
        })
        .collect()
}

fn take<V: std::str::FromStr>(map: &mut BTreeMap<String, String>, key: &str, default: V) -> Result<V> {
    match map.remove(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::config(format!("dataset option {key}: cannot parse {v:?}"))),
    }
}

fn path(map: &mut BTreeMap<String, String>, key: &str) -> Result<PathBuf> {
    map.remove(key)
        .map(PathBuf::from)
        .ok_or_else(|| Error::config(format!("dataset spec needs {key}=PATH")))
}

fn reject_rest(map: BTreeMap<String, String>) -> Result<()> {
    match map.keys().next() {
        Some(k) => Err(Error::config(format!("unknown dataset option {k:?}"))),
        None => Ok(()),
    }
}

impl DataSpec {
    /// Parses a spec string; `data_seed` seeds synthetic data unless the
    /// spec carries its own `seed`.
    pub fn parse(text: &str, data_seed: u64) -> Result<Self> {
        let (kind, body) = text.split_once(':').unwrap_or((text, ""));
        match kind.trim() {
            "synth" => {
                let mut m = kv(body)?;
                let classes = take(&mut m, "classes", 10)?;
                let features = take(&mut m, "features", 784)?;
                let mut spec = BlobSpec::new(classes, features, take(&mut m, "spread", 0.15)?, take(&mut m, "seed", data_seed)?);
                spec.informative = match m.remove("informative").as_deref() {
                    None | Some("all") => None,
                    Some(v) => Some(v.parse().map_err(|_| Error::config(format!("bad informative {v:?}")))?),
                };
                spec.binary = match m.remove("binary") {
                    None => None,
                    Some(v) => Some(v.parse().map_err(|_| Error::config(format!("bad binary {v:?}")))?),
                };
                spec.modes = take(&mut m, "modes", 1)?;
                let train_per_class = take(&mut m, "train_per_class", 600)?;
                let test_per_class = take(&mut m, "test_per_class", 100)?;
                reject_rest(m)?;
                if train_per_class == 0 || test_per_class == 0 {
                    return Err(Error::config("per-class sample counts must be positive"));
                }
                Ok(DataSpec::Synth {
                    spec,
                    train_per_class,
                    test_per_class,
                })
            }
            "idx" if !body.contains('=') => {
                let dir = Path::new(body.trim());
                Ok(DataSpec::Idx {
                    train_images: dir.join("train-images-idx3-ubyte"),
                    train_labels: dir.join("train-labels-idx1-ubyte"),
                    test_images: dir.join("t10k-images-idx3-ubyte"),
                    test_labels: dir.join("t10k-labels-idx1-ubyte"),
                })
            }
            "idx" => {
                let mut m = kv(body)?;
                let spec = DataSpec::Idx {
                    train_images: path(&mut m, "train_images")?,
                    train_labels: path(&mut m, "train_labels")?,
                    test_images: path(&mut m, "test_images")?,
                    test_labels: path(&mut m, "test_labels")?,
                };
                reject_rest(m)?;
                Ok(spec)
            }
            "csv" => {
                let mut m = kv(body)?;
                let spec = DataSpec::Csv {
                    train: path(&mut m, "train")?,
                    test: path(&mut m, "test")?,
                };
                reject_rest(m)?;
                Ok(spec)
            }
            other => Err(Error::config(format!("unknown dataset kind {other:?}"))),
        }
    }

    /// Loads (or generates) the data and carves the validation split.
    pub fn load(&self, val_fraction: f64, data_seed: u64) -> Result<DataSplits> {
        let (full, test) = match self {
            DataSpec::Synth {
                spec,
                train_per_class,
                test_per_class,
            } => (spec.sample(*train_per_class, Split::Train)?, spec.sample(*test_per_class, Split::Test)?),
            DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => (
                load_idx(train_images, train_labels, Split::Train)?,
                load_idx(test_images, test_labels, Split::Test)?,
            ),
            DataSpec::Csv { train, test } => (load_csv(train, Split::Train)?, load_csv(test, Split::Test)?),
        };
        if full.n_features() != test.n_features() {
            return Err(Error::Data(format!(
                "train has {} features, test {}",
                full.n_features(),
                test.n_features()
            )));
        }
        let (mut train, mut val) = split(&full, val_fraction, data_seed)?;
        let classes = full.n_classes.max(test.n_classes);
        train.n_classes = classes;
        val.n_classes = classes;
        let mut test = test;
        test.n_classes = classes;
        Ok(DataSplits { train, val, test })
    }
}

/// Parses and loads the dataset named by a run configuration.
pub fn load_splits(dataset: &str, val_fraction: f64, data_seed: u64) -> Result<DataSplits> {
    DataSpec::parse(dataset, data_seed)?.load(val_fraction, data_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_defaults_and_overrides() {
        let s = DataSpec::parse("synth:classes=3,features=5,train_per_class=20,test_per_class=4", 7).unwrap();
        let d = s.load(0.1, 7).unwrap();
        assert_eq!(d.train.len() + d.val.len(), 60);
        assert_eq!(d.val.len(), 6);
        assert_eq!(d.test.len(), 12);
        assert_eq!(d.train.n_features(), 5);
        assert!(DataSpec::parse("synth:bogus=1", 0).is_err());
        assert!(DataSpec::parse("parquet:x", 0).is_err());
    }

    #[test]
    fn idx_dir_form() {
        let DataSpec::Idx { test_labels, .. } = DataSpec::parse("idx:/data/mnist", 0).unwrap() else {
            panic!("expected idx");
        };
        assert_eq!(test_labels, Path::new("/data/mnist/t10k-labels-idx1-ubyte"));
    }
}
