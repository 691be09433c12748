//! Run configuration as line-oriented `key = value` text.
//!
//! Blank lines and text after `#` are ignored. Keys not present keep their
//! defaults; unknown or repeated keys are errors. [`RunConfig::dump`] prints
//! every key with its current value and parses back to the same config.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eval::IdPool;
use crate::model::FoodConfig;
use crate::optim::AdamaxConfig;
use crate::radar::RadarConfig;
use crate::train::TrainConfig;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` set twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`: {msg}")]
    Value {
        line: usize,
        key: String,
        value: String,
        msg: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Per-class fraction of ID frames used for training (the rest is test).
    pub train_fraction: f64,
    /// Per-class fraction of the training frames held out for calibration.
    pub calibration_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            calibration_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub frames_per_class: usize,
    pub ood_frames: usize,
    pub ood_identities: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames_per_class: 2000,
            ood_frames: 2000,
            ood_identities: crate::radar::DEFAULT_OOD_IDENTITIES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub id_pool: IdPool,
    pub score_batch: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            id_pool: IdPool::ClassOnly,
            score_batch: crate::eval::DEFAULT_SCORE_BATCH,
        }
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Master seed. Model init, shuffling, splits and synthesis derive
    /// their own seeds from it.
    pub seed: u64,
    pub model: FoodConfig,
    pub optim: AdamaxConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub synth: SynthConfig,
    pub radar: RadarConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            seed: 0,
            model: FoodConfig::default(),
            optim: AdamaxConfig::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            synth: SynthConfig::default(),
            radar: RadarConfig::default(),
            eval: EvalConfig::default(),
        };
        c.resolve();
        c
    }
}

/// Offsets keeping the derived seeds apart.
pub mod seed_offsets {
    pub const MODEL: u64 = 0;
    pub const SHUFFLE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const CALIBRATION_SPLIT: u64 = 3;
    pub const SYNTH: u64 = 4;
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        line,
        key: key.to_string(),
        value: value.to_string(),
        msg: e.to_string(),
    })
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .map(|v| parse_value(line, key, v.trim()))
        .collect()
}

fn parse_pool(line: usize, key: &str, value: &str) -> Result<IdPool, ConfigError> {
    match value {
        "class_only" => Ok(IdPool::ClassOnly),
        "all_id" => Ok(IdPool::AllId),
        _ => Err(ConfigError::Value {
            line,
            key: key.into(),
            value: value.into(),
            msg: "expected class_only or all_id".into(),
        }),
    }
}

/// Every key in dump order.
pub const KEYS: &[&str] = &[
    "seed",
    "model.encoder_channels",
    "model.kernel",
    "model.stride",
    "model.padding",
    "model.cl_latent",
    "model.pl_latent",
    "model.pl_pool_factor",
    "model.leaky_slope",
    "optim.lr",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "train.epochs",
    "train.batch_per_class",
    "split.train_fraction",
    "split.calibration_fraction",
    "synth.frames_per_class",
    "synth.ood_frames",
    "synth.ood_identities",
    "radar.n_tx",
    "radar.n_rx",
    "radar.n_chirps",
    "radar.n_samples",
    "radar.frame_period",
    "radar.chirp_to_chirp",
    "radar.f_min",
    "radar.f_max",
    "radar.adc_rate",
    "radar.adc_bits",
    "eval.id_pool",
    "eval.score_batch",
];

impl RunConfig {
    /// Defaults with the given master seed.
    pub fn with_seed(seed: u64) -> Self {
        let mut c = Self {
            seed,
            ..Self::default()
        };
        c.resolve();
        c
    }

    /// Fills the derived fields: per-component seeds from `seed` and the
    /// model input size from the radar frame.
    pub fn resolve(&mut self) {
        self.model.seed = self.seed.wrapping_add(seed_offsets::MODEL);
        self.train.seed = self.seed.wrapping_add(seed_offsets::SHUFFLE);
        self.model.input_height = self.radar.n_chirps;
        self.model.input_width = self.radar.n_samples;
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(seed_offsets::SPLIT)
    }

    pub fn calibration_split_seed(&self) -> u64 {
        self.seed.wrapping_add(seed_offsets::CALIBRATION_SPLIT)
    }

    pub fn synth_seed(&self) -> u64 {
        self.seed.wrapping_add(seed_offsets::SYNTH)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse_value(line, key, v)?,
            "model.encoder_channels" => self.model.encoder_channels = parse_list(line, key, v)?,
            "model.kernel" => self.model.kernel = parse_value(line, key, v)?,
            "model.stride" => self.model.stride = parse_value(line, key, v)?,
            "model.padding" => self.model.padding = parse_value(line, key, v)?,
            "model.cl_latent" => self.model.cl_latent = parse_value(line, key, v)?,
            "model.pl_latent" => self.model.pl_latent = parse_value(line, key, v)?,
            "model.pl_pool_factor" => self.model.pl_pool_factor = parse_value(line, key, v)?,
            "model.leaky_slope" => self.model.leaky_slope = parse_value(line, key, v)?,
            "optim.lr" => self.optim.lr = parse_value(line, key, v)?,
            "optim.beta1" => self.optim.beta1 = parse_value(line, key, v)?,
            "optim.beta2" => self.optim.beta2 = parse_value(line, key, v)?,
            "optim.eps" => self.optim.eps = parse_value(line, key, v)?,
            "train.epochs" => self.train.epochs = parse_value(line, key, v)?,
            "train.batch_per_class" => self.train.batch_per_class = parse_value(line, key, v)?,
            "split.train_fraction" => self.split.train_fraction = parse_value(line, key, v)?,
            "split.calibration_fraction" => {
                self.split.calibration_fraction = parse_value(line, key, v)?
            }
            "synth.frames_per_class" => self.synth.frames_per_class = parse_value(line, key, v)?,
            "synth.ood_frames" => self.synth.ood_frames = parse_value(line, key, v)?,
            "synth.ood_identities" => self.synth.ood_identities = parse_value(line, key, v)?,
            "radar.n_tx" => self.radar.n_tx = parse_value(line, key, v)?,
            "radar.n_rx" => self.radar.n_rx = parse_value(line, key, v)?,
            "radar.n_chirps" => self.radar.n_chirps = parse_value(line, key, v)?,
            "radar.n_samples" => self.radar.n_samples = parse_value(line, key, v)?,
            "radar.frame_period" => self.radar.frame_period = parse_value(line, key, v)?,
            "radar.chirp_to_chirp" => self.radar.chirp_to_chirp = parse_value(line, key, v)?,
            "radar.f_min" => self.radar.f_min = parse_value(line, key, v)?,
            "radar.f_max" => self.radar.f_max = parse_value(line, key, v)?,
            "radar.adc_rate" => self.radar.adc_rate = parse_value(line, key, v)?,
            "radar.adc_bits" => self.radar.adc_bits = parse_value(line, key, v)?,
            "eval.id_pool" => self.eval.id_pool = parse_pool(line, key, v)?,
            "eval.score_batch" => self.eval.score_batch = parse_value(line, key, v)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let m = &self.model;
        let r = &self.radar;
        match key {
            "seed" => self.seed.to_string(),
            "model.encoder_channels" => m
                .encoder_channels
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "model.kernel" => m.kernel.to_string(),
            "model.stride" => m.stride.to_string(),
            "model.padding" => m.padding.to_string(),
            "model.cl_latent" => m.cl_latent.to_string(),
            "model.pl_latent" => m.pl_latent.to_string(),
            "model.pl_pool_factor" => m.pl_pool_factor.to_string(),
            "model.leaky_slope" => m.leaky_slope.to_string(),
            "optim.lr" => self.optim.lr.to_string(),
            "optim.beta1" => self.optim.beta1.to_string(),
            "optim.beta2" => self.optim.beta2.to_string(),
            "optim.eps" => self.optim.eps.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.batch_per_class" => self.train.batch_per_class.to_string(),
            "split.train_fraction" => self.split.train_fraction.to_string(),
            "split.calibration_fraction" => self.split.calibration_fraction.to_string(),
            "synth.frames_per_class" => self.synth.frames_per_class.to_string(),
            "synth.ood_frames" => self.synth.ood_frames.to_string(),
            "synth.ood_identities" => self.synth.ood_identities.to_string(),
            "radar.n_tx" => r.n_tx.to_string(),
            "radar.n_rx" => r.n_rx.to_string(),
            "radar.n_chirps" => r.n_chirps.to_string(),
            "radar.n_samples" => r.n_samples.to_string(),
            "radar.frame_period" => r.frame_period.to_string(),
            "radar.chirp_to_chirp" => r.chirp_to_chirp.to_string(),
            "radar.f_min" => r.f_min.to_string(),
            "radar.f_max" => r.f_max.to_string(),
            "radar.adc_rate" => r.adc_rate.to_string(),
            "radar.adc_bits" => r.adc_bits.to_string(),
            "eval.id_pool" => match self.eval.id_pool {
                IdPool::ClassOnly => "class_only".into(),
                IdPool::AllId => "all_id".into(),
            },
            "eval.score_batch" => self.eval.score_batch.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Parses `text` over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("expected `key = value`, got `{content}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&canonical) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            };
            if seen.contains(&canonical) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(canonical);
            config.set(line, key, value)?;
        }
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    /// Every key with its value, one per line.
    pub fn dump(&self) -> String {
        let mut out = String::from("# FOOD run configuration\n");
        let mut section = "";
        for key in KEYS {
            let s = key.split_once('.').map_or("", |(s, _)| s);
            if s != section {
                let _ = writeln!(out, "\n# {s}");
                section = s;
            }
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    /// Model config with its input size tied to the radar frame.
    pub fn model_config(&self) -> FoodConfig {
        let mut c = self.clone();
        c.resolve();
        c.model
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.radar.validate().map_err(ConfigError::Invalid)?;
        if self.model.encoder_channels.first() != Some(&self.radar.n_rx) {
            return invalid(format!(
                "model.encoder_channels must start with radar.n_rx = {}",
                self.radar.n_rx
            ));
        }
        self.model_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.optim
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.train.batch_per_class == 0 {
            return invalid("train.batch_per_class must be positive".into());
        }
        let frac = |v: f64| v.is_finite() && v > 0.0 && v < 1.0;
        if !frac(self.split.train_fraction) || !frac(self.split.calibration_fraction) {
            return invalid("split fractions must lie strictly between 0 and 1".into());
        }
        if self.synth.ood_identities == 0 {
            return invalid("synth.ood_identities must be positive".into());
        }
        if self.eval.score_batch == 0 {
            return invalid("eval.score_batch must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let c = RunConfig::default();
        assert_eq!(c.optim.lr, 0.002);
        assert_eq!(c.train.epochs, 30);
        assert_eq!(c.train.batch_per_class, 32);
        assert_eq!(c.split.train_fraction, 0.9);
        assert_eq!(c.split.calibration_fraction, 0.1);
    }

    #[test]
    fn dump_round_trips() {
        let mut c = RunConfig::with_seed(17);
        c.optim.lr = 1.5e-3;
        c.eval.id_pool = IdPool::AllId;
        c.model.encoder_channels = vec![3, 8, 16, 32];
        let text = c.dump();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
        for key in KEYS {
            assert!(text.contains(&format!("{key} = ")), "{key}");
        }
    }

    #[test]
    fn overrides_and_comments() {
        let c = RunConfig::parse("# comment\n\ntrain.epochs = 5 # inline\nseed=9\n").unwrap();
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.seed, 9);
        assert_eq!(c.train.seed, 10);
    }

    #[test]
    fn errors_name_the_line() {
        assert_eq!(
            RunConfig::parse("seed = 1\nbogus = 2").unwrap_err(),
            ConfigError::UnknownKey {
                line: 2,
                key: "bogus".into()
            }
        );
        assert!(matches!(
            RunConfig::parse("seed = 1\nseed = 2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            RunConfig::parse("train.epochs = many"),
            Err(ConfigError::Value { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("no equals sign"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("split.train_fraction = 1.5"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::parse("model.encoder_channels = 2,8"),
            Err(ConfigError::Invalid(_))
        ));
    }
}
