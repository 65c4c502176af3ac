//! Training hyperparameters and their flat `key=value` file form.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{CaeError, Result};

/// Starting point of the transfer nets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TransferInit {
    /// The same uniform draw as every other parameter.
    #[default]
    Uniform,
    /// Uniform draw shifted towards the identity map.
    NearIdentity,
}

impl FromStr for TransferInit {
    type Err = CaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(TransferInit::Uniform),
            "near_identity" => Ok(TransferInit::NearIdentity),
            other => Err(CaeError::Config(format!(
                "transfer_init must be uniform or near_identity, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for TransferInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferInit::Uniform => "uniform",
            TransferInit::NearIdentity => "near_identity",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_autoencoder: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub disc_steps: usize,
    pub max_len: usize,
    pub seed: u64,
    pub no_cycle: bool,
    pub no_discriminators: bool,
    pub checkpoint_dir: Option<PathBuf>,
    pub vocab_max_size: usize,
    /// Epochs of single-autoencoder pretraining on both corpora before the
    /// style autoencoders are split; 0 disables it.
    pub warmup_epochs: usize,
    pub transfer_init: TransferInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            lambda1: 0.1,
            lambda2: 1.0,
            lambda3: 1.0,
            batch_size: 64,
            epochs: 10,
            lr_autoencoder: 1e-3,
            lr_generator: 1e-4,
            lr_discriminator: 1e-4,
            disc_steps: 1,
            max_len: crate::data::DEFAULT_MAX_LEN,
            seed: 0,
            no_cycle: false,
            no_discriminators: false,
            checkpoint_dir: None,
            vocab_max_size: 10_000,
            warmup_epochs: 0,
            transfer_init: TransferInit::Uniform,
        }
    }
}

const KEYS: &[&str] = &[
    "hidden",
    "lambda1",
    "lambda2",
    "lambda3",
    "batch_size",
    "epochs",
    "lr_autoencoder",
    "lr_generator",
    "lr_discriminator",
    "disc_steps",
    "max_len",
    "seed",
    "no_cycle",
    "no_discriminators",
    "checkpoint_dir",
    "vocab_max_size",
    "warmup_epochs",
    "transfer_init",
];

impl TrainConfig {
    /// Sentiment-corpus setting: 128 hidden units, 10K vocabulary.
    pub fn yelp() -> Self {
        Self::default()
    }

    /// Topic-corpus setting: 300 hidden units, 30K vocabulary.
    pub fn yahoo() -> Self {
        Self {
            hidden: 300,
            vocab_max_size: 30_000,
            ..Self::default()
        }
    }

    /// Setting for the built-in two-style toy grammar: 64 hidden units,
    /// small batches, faster autoencoder and generator rates, and a warm start
    /// (shared autoencoder pretraining, near-identity transfer nets).
    pub fn synthetic() -> Self {
        Self {
            hidden: 64,
            batch_size: 16,
            epochs: 15,
            lr_autoencoder: 3e-3,
            lr_generator: 3e-4,
            warmup_epochs: 20,
            transfer_init: TransferInit::NearIdentity,
            ..Self::default()
        }
    }

    /// The weights the trainer actually applies once ablations are folded in.
    pub fn effective_lambdas(&self) -> (f64, f64, f64) {
        (
            self.lambda1,
            if self.no_discriminators { 0.0 } else { self.lambda2 },
            if self.no_cycle { 0.0 } else { self.lambda3 },
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CaeError::Config(msg));
        if self.hidden < 2 {
            return bad(format!("hidden must be >= 2, got {}", self.hidden));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("lr_autoencoder", self.lr_autoencoder),
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if self.disc_steps < 1 {
            return bad("disc_steps must be >= 1".into());
        }
        if self.max_len < 1 {
            return bad("max_len must be >= 1".into());
        }
        if self.vocab_max_size < 1 {
            return bad("vocab_max_size must be >= 1".into());
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key}={}", self.get(key));
        }
        s
    }

    fn get(&self, key: &str) -> String {
        match key {
            "hidden" => self.hidden.to_string(),
            "lambda1" => format!("{:?}", self.lambda1),
            "lambda2" => format!("{:?}", self.lambda2),
            "lambda3" => format!("{:?}", self.lambda3),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr_autoencoder" => format!("{:?}", self.lr_autoencoder),
            "lr_generator" => format!("{:?}", self.lr_generator),
            "lr_discriminator" => format!("{:?}", self.lr_discriminator),
            "disc_steps" => self.disc_steps.to_string(),
            "max_len" => self.max_len.to_string(),
            "seed" => self.seed.to_string(),
            "no_cycle" => self.no_cycle.to_string(),
            "no_discriminators" => self.no_discriminators.to_string(),
            "checkpoint_dir" => self
                .checkpoint_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "vocab_max_size" => self.vocab_max_size.to_string(),
            "warmup_epochs" => self.warmup_epochs.to_string(),
            "transfer_init" => self.transfer_init.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| CaeError::Config(format!("cannot parse {key}={value}")))
        }
        match key.trim() {
            "hidden" => self.hidden = parse(key, value)?,
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "lambda3" => self.lambda3 = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr_autoencoder" => self.lr_autoencoder = parse(key, value)?,
            "lr_generator" => self.lr_generator = parse(key, value)?,
            "lr_discriminator" => self.lr_discriminator = parse(key, value)?,
            "disc_steps" => self.disc_steps = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "no_cycle" => self.no_cycle = parse(key, value)?,
            "no_discriminators" => self.no_discriminators = parse(key, value)?,
            "checkpoint_dir" => {
                let v = value.trim();
                self.checkpoint_dir = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "vocab_max_size" => self.vocab_max_size = parse(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value)?,
            "transfer_init" => self.transfer_init = value.parse()?,
            other => return Err(CaeError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text` on top of `self`. Blank lines
    /// and lines starting with `#` are ignored.
    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CaeError::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv_str(text)?;
        Ok(cfg)
    }
}
