//! Balanced mini-batch training.
//!
//! Every step draws one equal-size batch from each enrolled class. Class
//! orders are reshuffled each epoch from `(seed, epoch)`, and the trailing
//! partial batch is dropped.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{FoodModel, LossBreakdown, ModelError, NUM_CLASSES};
use crate::optim::{Adamax, AdamaxConfig, OptimError};
use crate::radar::{normalize_batch, FrameCube, Label};
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("no training frames for class {0}")]
    EmptyClass(Label),
    #[error("batch size must be positive")]
    BatchSize,
    #[error("numeric failure at epoch {epoch}, step {step}: {detail}")]
    NonFinite {
        epoch: usize,
        step: u64,
        detail: String,
    },
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Optim(OptimError),
}

impl TrainError {
    fn at(epoch: usize, step: u64, err: impl Into<TrainError>) -> Self {
        match err.into() {
            TrainError::Model(ModelError::Tensor(e @ TensorError::NonFinite { .. }))
            | TrainError::Model(ModelError::Tensor(e @ TensorError::NonScalarLoss(_))) => {
                TrainError::NonFinite {
                    epoch,
                    step,
                    detail: e.to_string(),
                }
            }
            TrainError::Optim(e @ OptimError::NonFinite(_)) => TrainError::NonFinite {
                epoch,
                step,
                detail: e.to_string(),
            },
            other => other,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, TrainError::NonFinite { .. })
    }
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<OptimError> for TrainError {
    fn from(e: OptimError) -> Self {
        TrainError::Optim(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_per_class: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_per_class: 32,
            seed: 0,
        }
    }
}

/// Mean losses over the steps of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Optimizer step count after the epoch.
    pub step: u64,
    pub steps_in_epoch: usize,
    pub losses: LossBreakdown,
}

impl EpochLog {
    /// `key=value` line with the seven components and the total.
    pub fn to_line(&self) -> String {
        let l = &self.losses;
        format!(
            "epoch={} step={} mp1={:.6e} mp2={:.6e} mp3={:.6e} cl={:.6e} pl1={:.6e} pl2={:.6e} pl3={:.6e} total={:.6e}",
            self.epoch, self.step, l.mp[0], l.mp[1], l.mp[2], l.cl, l.pl[0], l.pl[1], l.pl[2], l.total
        )
    }
}

/// Draws balanced batches: `steps` batches of `batch` frames from each class.
pub fn epoch_batches(
    class_sizes: [usize; NUM_CLASSES],
    batch_per_class: usize,
    seed: u64,
    epoch: usize,
) -> Vec<[Vec<usize>; NUM_CLASSES]> {
    let smallest = *class_sizes.iter().min().expect("three classes");
    let batch = batch_per_class.min(smallest);
    if batch == 0 {
        return Vec::new();
    }
    let steps = smallest / batch;
    let orders: Vec<Vec<usize>> = class_sizes
        .iter()
        .enumerate()
        .map(|(class, &n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((epoch * NUM_CLASSES + class) as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        })
        .collect();
    (0..steps)
        .map(|s| [0, 1, 2].map(|c| orders[c][s * batch..(s + 1) * batch].to_vec()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: FoodModel<f32>,
    pub optimizer: Adamax,
    /// Completed epochs.
    pub epoch: usize,
}

impl Trainer {
    pub fn new(model: FoodModel<f32>, optimizer: AdamaxConfig) -> Result<Self, TrainError> {
        let optimizer = Adamax::new(optimizer, model.params())?;
        Ok(Self {
            model,
            optimizer,
            epoch: 0,
        })
    }

    pub fn resume(model: FoodModel<f32>, optimizer: Adamax, epoch: usize) -> Self {
        Self {
            model,
            optimizer,
            epoch,
        }
    }

    /// Runs one epoch over `classes` (PER1..PER3 training frames).
    pub fn run_epoch(
        &mut self,
        classes: [&[&FrameCube]; NUM_CLASSES],
        config: &TrainConfig,
    ) -> Result<EpochLog, TrainError> {
        for (i, c) in classes.iter().enumerate() {
            if c.is_empty() {
                return Err(TrainError::EmptyClass(Label::ID[i]));
            }
        }
        if config.batch_per_class == 0 {
            return Err(TrainError::BatchSize);
        }
        let epoch = self.epoch + 1;
        let sizes = classes.map(|c| c.len());
        let plan = epoch_batches(sizes, config.batch_per_class, config.seed, self.epoch);
        let mut logs = Vec::with_capacity(plan.len());
        for picks in &plan {
            let step = self.optimizer.step + 1;
            let batches: Vec<_> = (0..NUM_CLASSES)
                .map(|c| {
                    normalize_batch(picks[c].iter().map(|&i| classes[c][i]))
                        .ok_or(ModelError::EmptyBatch)
                })
                .collect::<Result<_, _>>()
                .map_err(|e| TrainError::at(epoch, step, e))?;
            let (losses, grads) = self
                .model
                .loss_and_grads([&batches[0], &batches[1], &batches[2]])
                .map_err(|e| TrainError::at(epoch, step, e))?;
            if !losses.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    step,
                    detail: format!("loss {losses:?}"),
                });
            }
            self.optimizer
                .step(self.model.params_mut(), &grads)
                .map_err(|e| TrainError::at(epoch, step, e))?;
            logs.push(losses);
        }
        self.epoch = epoch;
        Ok(EpochLog {
            epoch,
            step: self.optimizer.step,
            steps_in_epoch: logs.len(),
            losses: LossBreakdown::mean(&logs).expect("at least one step"),
        })
    }

    /// Trains until `config.epochs` epochs are complete, reporting each one.
    pub fn fit(
        &mut self,
        classes: [&[&FrameCube]; NUM_CLASSES],
        config: &TrainConfig,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<Vec<EpochLog>, TrainError> {
        let mut logs = Vec::new();
        while self.epoch < config.epochs {
            let log = self.run_epoch(classes, config)?;
            on_epoch(&log);
            logs.push(log);
        }
        Ok(logs)
    }
}
