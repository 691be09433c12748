//! FOODMDL1 checkpoint container.
//!
//! ```text
//! magic "FOODMDL1" | u32 version (1)
//! u32 config_len | config text (RunConfig::dump)
//! u64 epochs completed
//! u32 param_count, then per parameter:
//!     u16 name_len | name | u8 ndim | ndim x u32 dims | f32 values
//! u8 has_optimizer, then if 1:
//!     u64 step | f64 lr, beta1, beta2, eps | per parameter f64 m values, f64 u values
//! u8 has_thresholds, then if 1:
//!     3 x f64 tau | 3 x u64 counts | 3 x f64 coverage
//! ```
//!
//! All integers and floats are little-endian, so a round trip is bit-exact.

use std::fs;
use std::io;
use std::path::Path;

use crate::config::{ConfigError, RunConfig};
use crate::detect::ThresholdSet;
use crate::model::{FoodModel, ModelError};
use crate::optim::{Adamax, AdamaxConfig};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"FOODMDL1";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error")]
    Io(#[from] io::Error),
    #[error("not a FOODMDL1 checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint at offset {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("embedded config: {0}")]
    Config(#[from] ConfigError),
    #[error("parameters do not fit the architecture: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub epoch: usize,
    pub params: ParamStore<f32>,
    pub optimizer: Option<Adamax>,
    pub thresholds: Option<ThresholdSet>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated {
                offset: self.pos,
                what,
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(
            n.checked_mul(8).ok_or(CheckpointError::Truncated {
                offset: self.pos,
                what,
            })?,
            what,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn flag(&mut self, what: &'static str) -> Result<bool, CheckpointError> {
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(CheckpointError::Corrupt(format!("{what} flag is {v}"))),
        }
    }
}

impl Checkpoint {
    pub fn from_model(
        config: RunConfig,
        epoch: usize,
        model: &FoodModel<f32>,
        optimizer: Option<&Adamax>,
        thresholds: Option<ThresholdSet>,
    ) -> Self {
        Self {
            config,
            epoch,
            params: model.params().clone(),
            optimizer: optimizer.cloned(),
            thresholds,
        }
    }

    /// Rebuilds the model, checking every tensor against the architecture.
    pub fn model(&self) -> Result<FoodModel<f32>, CheckpointError> {
        Ok(FoodModel::from_params(
            self.config.model_config(),
            self.params.clone(),
        )?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let text = self.config.dump();
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (_, name, t) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.ndim() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.step.to_le_bytes());
                let c = opt.config;
                for v in [c.lr, c.beta1, c.beta2, c.eps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for (m, u) in opt.m.iter().zip(&opt.u) {
                    for v in m.iter().chain(u) {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        match &self.thresholds {
            None => out.push(0),
            Some(t) => {
                out.push(1);
                for v in t.tau {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for v in t.counts {
                    out.extend_from_slice(&(v as u64).to_le_bytes());
                }
                for v in t.coverage {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let len = r.u32("config length")? as usize;
        let text = std::str::from_utf8(r.take(len, "config")?)
            .map_err(|_| CheckpointError::Corrupt("config is not UTF-8".into()))?;
        let config = RunConfig::parse(text)?;
        let epoch = r.u64("epoch")? as usize;

        let count = r.u32("parameter count")? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u16("parameter name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "parameter name")?)
                .map_err(|_| CheckpointError::Corrupt("parameter name is not UTF-8".into()))?
                .to_string();
            if params.find(&name).is_some() {
                return Err(CheckpointError::Corrupt(format!(
                    "duplicate parameter {name}"
                )));
            }
            let ndim = r.u8("parameter rank")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32("parameter dims")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4).map(|_| n))
                .ok_or_else(|| {
                    CheckpointError::Corrupt(format!("{name}: shape {shape:?} overflows"))
                })?;
            let raw = r.take(n * 4, "parameter values")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(shape, data)
                .map_err(|e| CheckpointError::Corrupt(format!("{name}: {e}")))?;
            params.insert(name, t);
        }

        let optimizer = if r.flag("optimizer")? {
            let step = r.u64("optimizer step")?;
            let config = AdamaxConfig {
                lr: r.f64("lr")?,
                beta1: r.f64("beta1")?,
                beta2: r.f64("beta2")?,
                eps: r.f64("eps")?,
            };
            let mut m = Vec::with_capacity(count);
            let mut u = Vec::with_capacity(count);
            for (_, _, t) in params.iter() {
                m.push(r.f64s(t.len(), "optimizer m")?);
                u.push(r.f64s(t.len(), "optimizer u")?);
            }
            Some(Adamax { config, step, m, u })
        } else {
            None
        };

        let thresholds = if r.flag("thresholds")? {
            let tau = [r.f64("tau")?, r.f64("tau")?, r.f64("tau")?];
            let counts = [
                r.u64("counts")? as usize,
                r.u64("counts")? as usize,
                r.u64("counts")? as usize,
            ];
            let coverage = [r.f64("coverage")?, r.f64("coverage")?, r.f64("coverage")?];
            Some(ThresholdSet {
                tau,
                counts,
                coverage,
            })
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            epoch,
            params,
            optimizer,
            thresholds,
        })
    }

    /// Writes atomically via a sibling temporary file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FoodConfig;

    fn small_config() -> RunConfig {
        let mut c = RunConfig::with_seed(5);
        c.model = FoodConfig {
            encoder_channels: vec![3, 4, 8],
            cl_latent: 6,
            pl_latent: 5,
            pl_pool_factor: 2,
            ..FoodConfig::default()
        };
        c.radar.n_chirps = 8;
        c.radar.n_samples = 16;
        c.radar.chirp_to_chirp = 391.55e-6;
        c.resolve();
        c
    }

    fn checkpoint(with_state: bool) -> Checkpoint {
        let config = small_config();
        let model = FoodModel::<f32>::build(config.model_config()).unwrap();
        let mut opt = Adamax::new(config.optim, model.params()).unwrap();
        opt.step = 7;
        opt.m[0][0] = -0.125;
        opt.u[1][0] = 3.5e-9;
        let thresholds = ThresholdSet {
            tau: [0.1, 0.2, f64::MIN_POSITIVE],
            counts: [10, 11, 12],
            coverage: [0.95, 1.0, 0.96],
        };
        Checkpoint::from_model(
            config,
            3,
            &model,
            with_state.then_some(&opt),
            with_state.then_some(thresholds),
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for with_state in [false, true] {
            let c = checkpoint(with_state);
            let bytes = c.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_bytes(), bytes);
            back.model().unwrap();
        }
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = checkpoint(true).to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Truncated { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&extra),
            Err(CheckpointError::Corrupt(_))
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&magic),
            Err(CheckpointError::BadMagic)
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&[]),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let c = checkpoint(true);
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }
}
