//! Run configuration and its flat `key = value` file format.
//!
//! One setting per line, `#` starts a comment, keys are [`TrainConfig`]
//! field names. Later assignments win, so `--set key=value` overrides
//! applied after the file take precedence over it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    Static,
    Set,
    Rigl,
    Snip,
    Lth,
    Gmp,
    SnipSet,
    LthSet,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Dense,
        Method::Static,
        Method::Set,
        Method::Rigl,
        Method::Snip,
        Method::Lth,
        Method::Gmp,
        Method::SnipSet,
        Method::LthSet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Static => "static",
            Method::Set => "set",
            Method::Rigl => "rigl",
            Method::Snip => "snip",
            Method::Lth => "lth",
            Method::Gmp => "gmp",
            Method::SnipSet => "snip_set",
            Method::LthSet => "lth_set",
        }
    }

    /// Methods whose connectivity changes during training.
    pub fn explores(self) -> bool {
        matches!(self, Method::Set | Method::Rigl | Method::SnipSet | Method::LthSet)
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparseInit {
    Uniform,
    Er,
    Erk,
}

impl FromStr for SparseInit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SparseInit::Uniform),
            "er" => Ok(SparseInit::Er),
            "erk" => Ok(SparseInit::Erk),
            _ => Err(Error::config(format!("unknown sparse_init {s:?}"))),
        }
    }
}

impl fmt::Display for SparseInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SparseInit::Uniform => "uniform",
            SparseInit::Er => "er",
            SparseInit::Erk => "erk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::config(format!("unknown precision {s:?}"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

/// An epoch anchor, either absolute or as a fraction of the run length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpochAnchor {
    Epoch(usize),
    Fraction(f64),
}

impl EpochAnchor {
    pub fn resolve(self, epochs: usize) -> usize {
        match self {
            EpochAnchor::Epoch(e) => e,
            EpochAnchor::Fraction(f) => (f * epochs as f64).round() as usize,
        }
    }
}

impl FromStr for EpochAnchor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_suffix('%') {
            let v: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad percentage {s:?}")))?;
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::config(format!("percentage {s:?} outside [0, 100]")));
            }
            Ok(EpochAnchor::Fraction(v / 100.0))
        } else {
            s.parse()
                .map(EpochAnchor::Epoch)
                .map_err(|_| Error::config(format!("bad epoch {s:?}")))
        }
    }
}

impl fmt::Display for EpochAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpochAnchor::Epoch(e) => write!(f, "{e}"),
            EpochAnchor::Fraction(v) => write!(f, "{}%", v * 100.0),
        }
    }
}

/// Every setting of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub sparsity: f64,
    pub sparse_init: SparseInit,
    pub lr: f64,
    pub lr_milestones: Vec<EpochAnchor>,
    pub momentum_coef: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Iterations between connectivity updates; `None` (written `inf`) never updates.
    pub delta_t: Option<u64>,
    pub p0: f64,
    pub stop_exploration_epoch: Option<usize>,
    pub precision: Precision,
    pub seed: u64,
    pub dataset: String,
    pub data_seed: u64,
    pub val_fraction: f64,
    pub hidden_widths: Vec<usize>,
    pub gmp_start_epoch: EpochAnchor,
    pub gmp_update_every: u64,
    /// Dense pre-training epochs for the lottery-ticket methods; `None` uses `epochs`.
    pub lth_pretrain_epochs: Option<usize>,
    /// Materialize dense weight gradients at every step, not only where an
    /// update needs them.
    pub dense_grads: bool,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Set,
            sparsity: 0.9,
            sparse_init: SparseInit::Er,
            lr: 0.01,
            lr_milestones: vec![EpochAnchor::Fraction(0.5), EpochAnchor::Fraction(0.75)],
            momentum_coef: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            epochs: 200,
            delta_t: Some(1500),
            p0: 0.5,
            stop_exploration_epoch: None,
            precision: Precision::F64,
            seed: 1,
            dataset: "synth".into(),
            data_seed: 0,
            val_fraction: 0.1,
            hidden_widths: vec![1024, 512],
            gmp_start_epoch: EpochAnchor::Fraction(0.2),
            gmp_update_every: 100,
            lth_pretrain_epochs: None,
            dense_grads: false,
            out_dir: PathBuf::from("runs/latest"),
        }
    }
}

pub const KEYS: [&str; 23] = [
    "method",
    "sparsity",
    "sparse_init",
    "lr",
    "lr_milestones",
    "momentum_coef",
    "weight_decay",
    "batch_size",
    "epochs",
    "delta_t",
    "p0",
    "stop_exploration_epoch",
    "precision",
    "seed",
    "dataset",
    "data_seed",
    "val_fraction",
    "hidden_widths",
    "gmp_start_epoch",
    "gmp_update_every",
    "lth_pretrain_epochs",
    "dense_grads",
    "out_dir",
];

fn parse<V: FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<V: FromStr>(key: &str, v: &str) -> Result<Vec<V>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_opt<V: FromStr>(key: &str, v: &str) -> Result<Option<V>> {
    match v {
        "inf" | "none" | "" => Ok(None),
        _ => parse(key, v).map(Some),
    }
}

fn fmt_opt<V: fmt::Display>(v: &Option<V>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), ToString::to_string)
}

fn fmt_list<V: fmt::Display>(v: &[V]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "method" => self.method = v.parse()?,
            "sparsity" => self.sparsity = parse(key, v)?,
            "sparse_init" => self.sparse_init = v.parse()?,
            "lr" => self.lr = parse(key, v)?,
            "lr_milestones" => self.lr_milestones = parse_list(key, v)?,
            "momentum_coef" => self.momentum_coef = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "delta_t" => self.delta_t = parse_opt(key, v)?,
            "p0" => self.p0 = parse(key, v)?,
            "stop_exploration_epoch" => self.stop_exploration_epoch = parse_opt(key, v)?,
            "precision" => self.precision = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "dataset" => self.dataset = v.to_string(),
            "data_seed" => self.data_seed = parse(key, v)?,
            "val_fraction" => self.val_fraction = parse(key, v)?,
            "hidden_widths" => self.hidden_widths = parse_list(key, v)?,
            "gmp_start_epoch" => self.gmp_start_epoch = v.parse()?,
            "gmp_update_every" => self.gmp_update_every = parse(key, v)?,
            "lth_pretrain_epochs" => self.lth_pretrain_epochs = parse_opt(key, v)?,
            "dense_grads" => self.dense_grads = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Textual value of one field, in the form [`TrainConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "method" => self.method.to_string(),
            "sparsity" => self.sparsity.to_string(),
            "sparse_init" => self.sparse_init.to_string(),
            "lr" => self.lr.to_string(),
            "lr_milestones" => fmt_list(&self.lr_milestones),
            "momentum_coef" => self.momentum_coef.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "delta_t" => fmt_opt(&self.delta_t, "inf"),
            "p0" => self.p0.to_string(),
            "stop_exploration_epoch" => fmt_opt(&self.stop_exploration_epoch, "none"),
            "precision" => self.precision.to_string(),
            "seed" => self.seed.to_string(),
            "dataset" => self.dataset.clone(),
            "data_seed" => self.data_seed.to_string(),
            "val_fraction" => self.val_fraction.to_string(),
            "hidden_widths" => fmt_list(&self.hidden_widths),
            "gmp_start_epoch" => self.gmp_start_epoch.to_string(),
            "gmp_update_every" => self.gmp_update_every.to_string(),
            "lth_pretrain_epochs" => fmt_opt(&self.lth_pretrain_epochs, "none"),
            "dense_grads" => self.dense_grads.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        })
    }

    /// All fields in file order, as key/value text.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|&k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    /// Renders the config in the file format accepted by [`TrainConfig::parse_text`].
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|&k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    /// Applies `key=value` override strings.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override {:?} is not key=value", o.as_ref())))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn resolved_milestones(&self) -> Vec<usize> {
        self.resolved_milestones_for(self.epochs)
    }

    /// Milestones for a phase of `epochs` epochs (percentages scale with it).
    pub fn resolved_milestones_for(&self, epochs: usize) -> Vec<usize> {
        let mut m: Vec<usize> = self
            .lr_milestones
            .iter()
            .map(|a| a.resolve(epochs))
            .collect();
        m.sort_unstable();
        m
    }

    pub fn pretrain_epochs(&self) -> usize {
        self.lth_pretrain_epochs.unwrap_or(self.epochs)
    }

    /// Checks every field; called before any run starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if !(0.0..1.0).contains(&self.sparsity) {
            return bad(format!("sparsity {} outside [0, 1)", self.sparsity));
        }
        if self.method != Method::Dense && self.sparsity == 0.0 && self.method.explores() {
            return bad("exploring methods need a positive sparsity".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum_coef) {
            return bad(format!("momentum_coef {} outside [0, 1)", self.momentum_coef));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.delta_t == Some(0) {
            return bad("delta_t must be at least 1 (or inf)".into());
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return bad(format!("p0 {} outside (0, 1)", self.p0));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return bad(format!("hidden_widths {:?} must be non-empty and positive", self.hidden_widths));
        }
        if self.gmp_update_every == 0 {
            return bad("gmp_update_every must be at least 1".into());
        }
        if self.method == Method::Gmp {
            if self.sparsity == 0.0 {
                return bad("gmp needs a positive target sparsity".into());
            }
            if self.gmp_start_epoch.resolve(self.epochs) >= self.epochs {
                return bad("gmp_start_epoch must precede the end of training".into());
            }
        }
        if matches!(self.method, Method::Lth | Method::LthSet) && self.pretrain_epochs() == 0 {
            return bad("lth_pretrain_epochs must be at least 1".into());
        }
        if let Some(e) = self.stop_exploration_epoch {
            if e > self.epochs {
                return bad(format!("stop_exploration_epoch {e} beyond {} epochs", self.epochs));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_mlp_row() {
        let c = TrainConfig::default();
        assert_eq!(c.lr, 0.01);
        assert_eq!(c.batch_size, 128);
        assert_eq!(c.epochs, 200);
        assert_eq!(c.resolved_milestones(), vec![100, 150]);
        assert_eq!(c.weight_decay, 5e-4);
        assert_eq!(c.sparse_init, SparseInit::Er);
        assert_eq!(c.delta_t, Some(1500));
        assert_eq!(c.p0, 0.5);
        assert_eq!(c.gmp_start_epoch.resolve(200), 40);
        c.validate().unwrap();
    }

    #[test]
    fn text_roundtrip() {
        let mut c = TrainConfig::default();
        c.apply_text("method = rigl # comment\n\n delta_t = inf\nlr_milestones = 10, 20\nstop_exploration_epoch = 7\n")
            .unwrap();
        assert_eq!(c.method, Method::Rigl);
        assert_eq!(c.delta_t, None);
        assert_eq!(c.resolved_milestones(), vec![10, 20]);
        let back = TrainConfig::parse_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_and_errors() {
        let mut c = TrainConfig::default();
        c.apply_overrides(&["seed=9", "method=snip_set"]).unwrap();
        assert_eq!((c.seed, c.method), (9, Method::SnipSet));
        assert!(c.apply_overrides(&["nope=1"]).is_err());
        assert!(c.apply_overrides(&["seed"]).is_err());
        assert!(TrainConfig::parse_text("sparsity = 1.0").unwrap().validate().is_err());
        assert!(TrainConfig::parse_text("batch_size = abc").is_err());
    }
}
