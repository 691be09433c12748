//! Scoring passes and the per-class evaluation protocol.
//!
//! For class `i`, the ID side is `ood_scores[i]` of the class-`i` test frames
//! (or of every ID test frame in [`IdPool::AllId`] mode) and the OOD side is
//! `ood_scores[i]` of every OOD test frame.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{argmin, decide, ThresholdSet};
use crate::metrics::{MetricError, Positives, ScoredPopulation};
use crate::model::{FoodModel, ModelError, ReconErrors, ScoreTriple, NUM_CLASSES};
use crate::radar::{normalize_batch, FrameCube, Label};

pub const DEFAULT_SCORE_BATCH: usize = 32;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no ID test frames for class {0}")]
    MissingClass(Label),
    #[error("no OOD test frames")]
    NoOod,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl EvalError {
    pub fn is_numeric(&self) -> bool {
        match self {
            EvalError::Metric(MetricError::NonFinite(_)) => true,
            EvalError::Model(e) => e.is_numeric(),
            _ => false,
        }
    }
}

/// Which ID frames form the ID side of class `i`'s population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdPool {
    #[default]
    ClassOnly,
    AllId,
}

/// How reconstruction errors become scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreVariant {
    /// `CL + PL_i` for OOD, `MP_i + PL_i` for the class.
    #[default]
    Full,
    /// `CL` for OOD, `MP_i` for the class.
    NoPrivateLeaves,
}

impl ScoreVariant {
    pub fn apply(self, e: &ReconErrors) -> ScoreTriple {
        match self {
            ScoreVariant::Full => e.scores(),
            ScoreVariant::NoPrivateLeaves => ScoreTriple {
                ood_scores: [e.cl; NUM_CLASSES],
                cls_scores: e.mp,
            },
        }
    }
}

/// Reconstruction errors of `frames`, in order. Batches are scored in
/// parallel; the batching does not depend on the thread count.
pub fn recon_frames(
    model: &FoodModel<f32>,
    frames: &[&FrameCube],
    batch_size: usize,
) -> Result<Vec<ReconErrors>, ModelError> {
    let batch_size = batch_size.max(1);
    let chunks: Vec<Vec<ReconErrors>> = frames
        .par_chunks(batch_size)
        .map(|chunk| {
            let x = normalize_batch(chunk.iter().copied()).ok_or(ModelError::EmptyBatch)?;
            model.recon_errors(&x)
        })
        .collect::<Result<_, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn score_frames(
    model: &FoodModel<f32>,
    frames: &[&FrameCube],
    batch_size: usize,
) -> Result<Vec<ScoreTriple>, ModelError> {
    Ok(recon_frames(model, frames, batch_size)?
        .iter()
        .map(ReconErrors::scores)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub fpr95: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

impl ClassMetrics {
    pub fn from_population(pop: &ScoredPopulation) -> Result<Self, MetricError> {
        Ok(Self {
            auroc: pop.auroc()?,
            aupr_in: pop.aupr(Positives::Id)?,
            aupr_out: pop.aupr(Positives::Ood)?,
            fpr95: pop.fpr95()?,
            n_id: pop.id.len(),
            n_ood: pop.ood.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub id_pool: IdPool,
    pub variant: ScoreVariant,
    /// PER1..PER3.
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub mean_auroc: f64,
    pub mean_fpr95: f64,
    /// Argmin-of-`cls_scores` accuracy over ID test frames, ignoring the OOD
    /// rule.
    pub id_accuracy: f64,
    /// Decision accuracy over ID and OOD test frames.
    pub accuracy: f64,
    /// Fraction of ID test frames not rejected as OOD.
    pub id_acceptance: f64,
    /// Rows are true labels, columns decisions, both PER1, PER2, PER3, OOD.
    pub confusion: [[usize; 4]; 4],
    pub thresholds: ThresholdSet,
    /// Wall clock of the scoring pass over all test frames.
    pub test_time_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub id_pool: IdPool,
    pub variant: ScoreVariant,
    pub batch_size: usize,
}

fn label_slot(label: Label) -> usize {
    label.class_index().unwrap_or(3)
}

/// Builds the report from already computed reconstruction errors.
pub fn report_from_errors(
    id_errors: [&[ReconErrors]; NUM_CLASSES],
    ood_errors: &[ReconErrors],
    thresholds: &ThresholdSet,
    id_pool: IdPool,
    variant: ScoreVariant,
    test_time_seconds: f64,
) -> Result<MetricsReport, EvalError> {
    for (i, e) in id_errors.iter().enumerate() {
        if e.is_empty() {
            return Err(EvalError::MissingClass(Label::ID[i]));
        }
    }
    if ood_errors.is_empty() {
        return Err(EvalError::NoOod);
    }
    let id_scores: Vec<Vec<ScoreTriple>> = id_errors
        .iter()
        .map(|e| e.iter().map(|r| variant.apply(r)).collect())
        .collect();
    let ood_scores: Vec<ScoreTriple> = ood_errors.iter().map(|r| variant.apply(r)).collect();

    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    for i in 0..NUM_CLASSES {
        let id: Vec<f64> = match id_pool {
            IdPool::ClassOnly => id_scores[i].iter().map(|s| s.ood_scores[i]).collect(),
            IdPool::AllId => id_scores
                .iter()
                .flatten()
                .map(|s| s.ood_scores[i])
                .collect(),
        };
        let ood = ood_scores.iter().map(|s| s.ood_scores[i]).collect();
        per_class.push(ClassMetrics::from_population(&ScoredPopulation::new(
            id, ood,
        ))?);
    }
    let per_class: [ClassMetrics; NUM_CLASSES] = [per_class[0], per_class[1], per_class[2]];

    let mut confusion = [[0usize; 4]; 4];
    let mut id_correct = 0;
    let mut id_total = 0;
    for (i, scores) in id_scores.iter().enumerate() {
        for s in scores {
            confusion[i][label_slot(decide(s, thresholds).label)] += 1;
            id_correct += usize::from(argmin(&s.cls_scores) == i);
            id_total += 1;
        }
    }
    for s in &ood_scores {
        confusion[3][label_slot(decide(s, thresholds).label)] += 1;
    }
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..4).map(|i| confusion[i][i]).sum();
    let id_rejected: usize = confusion[..3].iter().map(|row| row[3]).sum();

    let mean =
        |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64;
    Ok(MetricsReport {
        id_pool,
        variant,
        per_class,
        mean_auroc: mean(|c| c.auroc),
        mean_fpr95: mean(|c| c.fpr95),
        id_accuracy: id_correct as f64 / id_total as f64,
        accuracy: correct as f64 / total as f64,
        id_acceptance: 1.0 - id_rejected as f64 / id_total as f64,
        confusion,
        thresholds: *thresholds,
        test_time_seconds,
    })
}

/// Reconstruction errors of a full test set plus the wall clock it took.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTestSet {
    pub id: [Vec<ReconErrors>; NUM_CLASSES],
    pub ood: Vec<ReconErrors>,
    pub seconds: f64,
}

impl ScoredTestSet {
    pub fn score(
        model: &FoodModel<f32>,
        id_test: [&[&FrameCube]; NUM_CLASSES],
        ood_test: &[&FrameCube],
        batch_size: usize,
    ) -> Result<Self, EvalError> {
        for (i, frames) in id_test.iter().enumerate() {
            if frames.is_empty() {
                return Err(EvalError::MissingClass(Label::ID[i]));
            }
        }
        if ood_test.is_empty() {
            return Err(EvalError::NoOod);
        }
        let start = Instant::now();
        let mut id = Vec::with_capacity(NUM_CLASSES);
        for frames in id_test {
            id.push(recon_frames(model, frames, batch_size)?);
        }
        let ood = recon_frames(model, ood_test, batch_size)?;
        let seconds = start.elapsed().as_secs_f64();
        let [a, b, c]: [Vec<ReconErrors>; 3] = id.try_into().expect("three classes");
        Ok(Self {
            id: [a, b, c],
            ood,
            seconds,
        })
    }

    pub fn report(
        &self,
        thresholds: &ThresholdSet,
        id_pool: IdPool,
        variant: ScoreVariant,
    ) -> Result<MetricsReport, EvalError> {
        report_from_errors(
            [&self.id[0], &self.id[1], &self.id[2]],
            &self.ood,
            thresholds,
            id_pool,
            variant,
            self.seconds,
        )
    }
}

/// Scores the test frames and evaluates them in one call.
pub fn evaluate(
    model: &FoodModel<f32>,
    thresholds: &ThresholdSet,
    id_test: [&[&FrameCube]; NUM_CLASSES],
    ood_test: &[&FrameCube],
    options: EvalOptions,
) -> Result<MetricsReport, EvalError> {
    let batch = if options.batch_size == 0 {
        DEFAULT_SCORE_BATCH
    } else {
        options.batch_size
    };
    ScoredTestSet::score(model, id_test, ood_test, batch)?.report(
        thresholds,
        options.id_pool,
        options.variant,
    )
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The report with the wall-clock field cleared, for comparing runs.
    pub fn without_timing(&self) -> Self {
        Self {
            test_time_seconds: 0.0,
            ..self.clone()
        }
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>8} {:>9} {:>8} {:>6} {:>6}",
            "class", "AUROC", "AUPR_IN", "AUPR_OUT", "FPR95", "n_id", "n_ood"
        );
        for (c, name) in self.per_class.iter().zip(["PER1", "PER2", "PER3"]) {
            let _ = writeln!(
                out,
                "{:<6} {:>8} {:>8} {:>9} {:>8} {:>6} {:>6}",
                name,
                pct(c.auroc),
                pct(c.aupr_in),
                pct(c.aupr_out),
                pct(c.fpr95),
                c.n_id,
                c.n_ood
            );
        }
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>8} {:>9} {:>8}",
            "mean",
            pct(self.mean_auroc),
            "",
            "",
            pct(self.mean_fpr95)
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "id accuracy       {}", pct(self.id_accuracy));
        let _ = writeln!(out, "overall accuracy  {}", pct(self.accuracy));
        let _ = writeln!(out, "id acceptance     {}", pct(self.id_acceptance));
        let _ = writeln!(out, "test time (s)     {:.3}", self.test_time_seconds);
        let _ = writeln!(
            out,
            "id pool           {}",
            match self.id_pool {
                IdPool::ClassOnly => "class_only",
                IdPool::AllId => "all_id",
            }
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>6} {:>6} {:>6}",
            "true\\pred", "PER1", "PER2", "PER3", "OOD"
        );
        for (row, name) in self.confusion.iter().zip(["PER1", "PER2", "PER3", "OOD"]) {
            let _ = writeln!(
                out,
                "{:<10} {:>6} {:>6} {:>6} {:>6}",
                name, row[0], row[1], row[2], row[3]
            );
        }
        out
    }
}
