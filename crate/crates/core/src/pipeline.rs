//! Synthesis, splitting, training, calibration and evaluation wired
//! together from one [`RunConfig`].

use crate::config::RunConfig;
use crate::detect::{DetectError, ThresholdSet};
use crate::eval::{EvalError, MetricsReport, ScoreVariant, ScoredTestSet};
use crate::model::{FoodModel, ModelError};
use crate::radar::{
    split, Dataset, FrameCube, Label, OodProfiles, ProfileError, SyntheticProfile, SyntheticSuite,
};
use crate::train::{EpochLog, TrainError, Trainer};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    pub fn is_numeric(&self) -> bool {
        match self {
            PipelineError::Train(e) => e.is_numeric(),
            PipelineError::Detect(e) => e.is_numeric(),
            PipelineError::Eval(e) => e.is_numeric(),
            PipelineError::Model(e) => e.is_numeric(),
            PipelineError::Profile(_) | PipelineError::Data(_) => false,
        }
    }
}

/// Default profiles with the configured number of OOD identities.
pub fn default_suite(config: &RunConfig) -> SyntheticSuite {
    SyntheticSuite {
        id: [0, 1, 2].map(SyntheticProfile::default_id),
        ood: OodProfiles::generate(
            config.synth.ood_identities,
            config.radar.n_rx,
            config.synth_seed(),
        ),
    }
}

/// `frames_per_class` frames of each enrolled class plus `ood_frames`.
pub fn synthesize(config: &RunConfig, suite: &SyntheticSuite) -> Result<Dataset, PipelineError> {
    Ok(suite.generate(
        &config.radar,
        config.synth.frames_per_class,
        config.synth.ood_frames,
        config.synth_seed(),
    )?)
}

/// Disjoint partitions of a labelled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub calibration: Dataset,
    pub test_id: Dataset,
    /// OOD frames are never trained on; all of them are test data.
    pub test_ood: Dataset,
}

impl Splits {
    pub fn new(data: &Dataset, config: &RunConfig) -> Result<Self, PipelineError> {
        let id = data.filter(Label::is_id);
        for label in Label::ID {
            if id.count(label) == 0 {
                return Err(PipelineError::Data(format!(
                    "no {label} frames in the data"
                )));
            }
        }
        let (train_all, test_id) = split(&id, config.split.train_fraction, config.split_seed());
        let (train, calibration) = split(
            &train_all,
            1.0 - config.split.calibration_fraction,
            config.calibration_split_seed(),
        );
        Ok(Self {
            train,
            calibration,
            test_id,
            test_ood: data.filter(|l| l == Label::Ood),
        })
    }
}

/// Borrowed per-class views of a dataset.
pub fn classes(data: &Dataset) -> [Vec<&FrameCube>; 3] {
    data.id_classes()
}

pub fn as_slices<'a, 'b>(c: &'a [Vec<&'b FrameCube>; 3]) -> [&'a [&'b FrameCube]; 3] {
    [&c[0], &c[1], &c[2]]
}

/// Trains a fresh model on `train` for `config.train.epochs` epochs.
pub fn train(
    config: &RunConfig,
    train: &Dataset,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<Trainer, PipelineError> {
    let model = FoodModel::<f32>::build(config.model_config())?;
    let mut trainer = Trainer::new(model, config.optim)?;
    let c = classes(train);
    trainer.fit(as_slices(&c), &config.train, on_epoch)?;
    Ok(trainer)
}

pub fn calibrate(
    config: &RunConfig,
    model: &FoodModel<f32>,
    calibration: &Dataset,
) -> Result<ThresholdSet, PipelineError> {
    let c = classes(calibration);
    Ok(ThresholdSet::calibrate(
        model,
        as_slices(&c),
        config.eval.score_batch,
    )?)
}

/// Reconstruction errors of the test partitions.
pub fn score_tests(
    config: &RunConfig,
    model: &FoodModel<f32>,
    splits: &Splits,
) -> Result<ScoredTestSet, PipelineError> {
    let c = classes(&splits.test_id);
    let ood: Vec<&FrameCube> = splits.test_ood.frames.iter().collect();
    Ok(ScoredTestSet::score(
        model,
        as_slices(&c),
        &ood,
        config.eval.score_batch,
    )?)
}

/// Result of one full run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub trainer: Trainer,
    pub epochs: Vec<EpochLog>,
    pub thresholds: ThresholdSet,
    pub scored: ScoredTestSet,
    pub report: MetricsReport,
}

impl Experiment {
    pub fn report_with(&self, variant: ScoreVariant) -> Result<MetricsReport, PipelineError> {
        Ok(self
            .scored
            .report(&self.thresholds, self.report.id_pool, variant)?)
    }
}

/// Train, calibrate and evaluate on already split data.
pub fn run(
    config: &RunConfig,
    splits: &Splits,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Experiment, PipelineError> {
    let mut epochs = Vec::new();
    let trainer = train(config, &splits.train, |log| {
        on_epoch(log);
        epochs.push(*log);
    })?;
    let thresholds = calibrate(config, &trainer.model, &splits.calibration)?;
    let scored = score_tests(config, &trainer.model, splits)?;
    let report = scored.report(&thresholds, config.eval.id_pool, ScoreVariant::Full)?;
    Ok(Experiment {
        trainer,
        epochs,
        thresholds,
        scored,
        report,
    })
}
