//! Raw ADC frame cubes: radar configuration, datasets, normalization and
//! stratified splitting. Synthesis lives in [`synth`], the on-disk
//! container in [`format`].

pub mod format;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub use format::{
    load_dataset, read_dataset, save_dataset, write_dataset, FormatError, FrameReader,
};
pub use synth::{
    beat_frequency, dominant_range_bin, mean_range_profile, synth_frame, OodProfiles, ProfileError,
    Scatterer, SyntheticProfile, SyntheticSuite, DEFAULT_OOD_IDENTITIES,
};

/// Largest code of the 12-bit ADC.
pub const ADC_MAX: u16 = 4095;
/// Mid-scale code, the DC level of a silent receiver.
pub const ADC_MID: u16 = 2048;

/// Acquisition parameters of the 60 GHz radar front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_chirps: usize,
    pub n_samples: usize,
    /// Seconds.
    pub frame_period: f64,
    /// Seconds between chirp starts.
    pub chirp_to_chirp: f64,
    /// Hz.
    pub f_min: f64,
    /// Hz.
    pub f_max: f64,
    /// Hz.
    pub adc_rate: f64,
    pub adc_bits: u32,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            n_tx: 1,
            n_rx: 3,
            n_chirps: 64,
            n_samples: 128,
            frame_period: 50e-3,
            chirp_to_chirp: 391.55e-6,
            f_min: 60.1e9,
            f_max: 61.1e9,
            adc_rate: 2e6,
            adc_bits: 12,
        }
    }
}

impl RadarConfig {
    pub fn bandwidth(&self) -> f64 {
        self.f_max - self.f_min
    }

    /// Sampled ramp duration `N_s / adc_rate`.
    pub fn chirp_duration(&self) -> f64 {
        self.n_samples as f64 / self.adc_rate
    }

    pub fn shape(&self) -> CubeShape {
        CubeShape {
            n_rx: self.n_rx,
            n_chirps: self.n_chirps,
            n_samples: self.n_samples,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            self.frame_period,
            self.chirp_to_chirp,
            self.f_min,
            self.adc_rate,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.n_rx == 0 || self.n_tx == 0 {
            return Err("radar parameters must be positive".into());
        }
        if self.n_chirps == 0 || self.n_samples == 0 {
            return Err("frame dimensions must be positive".into());
        }
        if !(self.bandwidth() > 0.0) {
            return Err("f_max must exceed f_min".into());
        }
        if self.chirp_to_chirp <= self.chirp_duration() {
            return Err(format!(
                "chirp-to-chirp time {} s does not exceed the chirp duration {} s",
                self.chirp_to_chirp,
                self.chirp_duration()
            ));
        }
        if self.adc_bits != 12 {
            return Err("only 12-bit ADC codes are supported".into());
        }
        Ok(())
    }
}

/// `N_rx x N_c x N_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CubeShape {
    pub n_rx: usize,
    pub n_chirps: usize,
    pub n_samples: usize,
}

impl CubeShape {
    pub fn len(&self) -> usize {
        self.n_rx * self.n_chirps * self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for CubeShape {
    fn default() -> Self {
        RadarConfig::default().shape()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Per1,
    Per2,
    Per3,
    Ood,
    Unlabeled,
}

impl Label {
    pub const ID: [Label; 3] = [Label::Per1, Label::Per2, Label::Per3];

    /// Byte used in FOODRAW1 files.
    pub fn code(self) -> u8 {
        match self {
            Label::Per1 => 0,
            Label::Per2 => 1,
            Label::Per3 => 2,
            Label::Ood => 3,
            Label::Unlabeled => 255,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Label::Per1,
            1 => Label::Per2,
            2 => Label::Per3,
            3 => Label::Ood,
            255 => Label::Unlabeled,
            _ => return None,
        })
    }

    /// Zero-based index for the three enrolled classes.
    pub fn class_index(self) -> Option<usize> {
        match self {
            Label::Per1 => Some(0),
            Label::Per2 => Some(1),
            Label::Per3 => Some(2),
            _ => None,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        Label::ID.get(i).copied()
    }

    pub fn is_id(self) -> bool {
        self.class_index().is_some()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Per1 => "PER1",
            Label::Per2 => "PER2",
            Label::Per3 => "PER3",
            Label::Ood => "OOD",
            Label::Unlabeled => "UNLABELED",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PER1" => Ok(Label::Per1),
            "PER2" => Ok(Label::Per2),
            "PER3" => Ok(Label::Per3),
            "OOD" => Ok(Label::Ood),
            "UNLABELED" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// One raw radar frame of 12-bit ADC codes, receiver-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameCube {
    pub shape: CubeShape,
    pub codes: Vec<u16>,
    pub label: Label,
}

impl FrameCube {
    pub fn new(shape: CubeShape, codes: Vec<u16>, label: Label) -> Result<Self, String> {
        if codes.len() != shape.len() {
            return Err(format!(
                "{} codes for a {}x{}x{} cube",
                codes.len(),
                shape.n_rx,
                shape.n_chirps,
                shape.n_samples
            ));
        }
        if let Some((i, &c)) = codes.iter().enumerate().find(|(_, &c)| c > ADC_MAX) {
            return Err(format!("code {c} at index {i} exceeds 12 bits"));
        }
        Ok(Self {
            shape,
            codes,
            label,
        })
    }

    pub fn code(&self, rx: usize, chirp: usize, sample: usize) -> u16 {
        let s = self.shape;
        self.codes[(rx * s.n_chirps + chirp) * s.n_samples + sample]
    }

    /// Samples of one chirp on one receiver.
    pub fn chirp(&self, rx: usize, chirp: usize) -> &[u16] {
        let s = self.shape;
        let start = (rx * s.n_chirps + chirp) * s.n_samples;
        &self.codes[start..start + s.n_samples]
    }
}

/// Maps a code to `[-1, 1]`.
pub fn scale_code(code: u16) -> f64 {
    code as f64 / ADC_MAX as f64 * 2.0 - 1.0
}

/// Scales codes to `[-1, 1]` and removes each receiver's mean, giving a
/// `[N_rx, N_c, N_s]` tensor.
pub fn normalize(frame: &FrameCube) -> Tensor<f32> {
    let s = frame.shape;
    let plane = s.n_chirps * s.n_samples;
    let mut out = Vec::with_capacity(frame.codes.len());
    for rx in frame.codes.chunks_exact(plane) {
        let scaled: Vec<f64> = rx.iter().map(|&c| scale_code(c)).collect();
        let mean = scaled.iter().sum::<f64>() / plane as f64;
        out.extend(scaled.iter().map(|v| (v - mean) as f32));
    }
    Tensor::new([s.n_rx, s.n_chirps, s.n_samples], out).expect("cube shape")
}

/// Stacks normalized frames into a `[B, N_rx, N_c, N_s]` batch.
pub fn normalize_batch<'a>(frames: impl IntoIterator<Item = &'a FrameCube>) -> Option<Tensor<f32>> {
    let items: Vec<_> = frames.into_iter().map(normalize).collect();
    Tensor::stack(&items).ok()
}

/// Ordered collection of frames sharing one cube shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub shape: CubeShape,
    pub frames: Vec<FrameCube>,
}

impl Dataset {
    pub fn new(shape: CubeShape) -> Self {
        Self {
            shape,
            frames: Vec::new(),
        }
    }

    pub fn from_frames(shape: CubeShape, frames: Vec<FrameCube>) -> Result<Self, String> {
        if let Some(f) = frames.iter().find(|f| f.shape != shape) {
            return Err(format!(
                "frame shape {:?} differs from {:?}",
                f.shape, shape
            ));
        }
        Ok(Self { shape, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &FrameCube> {
        self.frames.iter().filter(move |f| f.label == label)
    }

    pub fn count(&self, label: Label) -> usize {
        self.with_label(label).count()
    }

    /// Subset holding only the given labels, order preserved.
    pub fn filter(&self, keep: impl Fn(Label) -> bool) -> Dataset {
        Dataset {
            shape: self.shape,
            frames: self
                .frames
                .iter()
                .filter(|f| keep(f.label))
                .cloned()
                .collect(),
        }
    }

    /// Frames of each enrolled class, in PER1..PER3 order.
    pub fn id_classes(&self) -> [Vec<&FrameCube>; 3] {
        Label::ID.map(|l| self.with_label(l).collect())
    }
}

/// Stratified split: within every label, `round(train_fraction * n)` frames
/// chosen by a seeded shuffle go to the first set, the rest to the second.
/// Both sets keep the original frame order.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    assert!(
        (0.0..=1.0).contains(&train_fraction),
        "train fraction {train_fraction} outside [0, 1]"
    );
    let mut labels: Vec<Label> = dataset.frames.iter().map(|f| f.label).collect();
    labels.sort();
    labels.dedup();

    let mut in_train = vec![false; dataset.len()];
    for label in labels {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.frames[i].label == label)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label.code() as u64);
        idx.shuffle(&mut rng);
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let mut train = Dataset::new(dataset.shape);
    let mut test = Dataset::new(dataset.shape);
    for (frame, keep) in dataset.frames.iter().zip(in_train) {
        if keep {
            train.frames.push(frame.clone());
        } else {
            test.frames.push(frame.clone());
        }
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(value: u16, label: Label) -> FrameCube {
        let shape = CubeShape::default();
        FrameCube::new(shape, vec![value; shape.len()], label).unwrap()
    }

    #[test]
    fn default_config_is_consistent() {
        let c = RadarConfig::default();
        c.validate().unwrap();
        assert_eq!(c.bandwidth(), 1e9);
        assert!((c.chirp_duration() - 64e-6).abs() < 1e-15);
        assert_eq!(c.shape().len(), 3 * 64 * 128);
    }

    #[test]
    fn chirp_overlapping_next_is_invalid() {
        let c = RadarConfig {
            chirp_to_chirp: 50e-6,
            ..RadarConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn normalization_examples() {
        let x = normalize(&frame(ADC_MAX, Label::Per1));
        assert_eq!(x.shape(), &[3, 64, 128]);
        assert!(x.data().iter().all(|&v| v == 0.0));
        assert_eq!(scale_code(ADC_MAX), 1.0);
        assert_eq!(scale_code(0), -1.0);
        assert!((scale_code(2048) - 1.0 / 4095.0).abs() < 1e-15);
        assert!((scale_code(2048) - 2.442e-4).abs() < 1e-7);
    }

    #[test]
    fn normalization_removes_receiver_means() {
        let shape = CubeShape::default();
        let codes = (0..shape.len()).map(|i| (i % 4096) as u16).collect();
        let f = FrameCube::new(shape, codes, Label::Per2).unwrap();
        let x = normalize(&f);
        for rx in x.data().chunks_exact(64 * 128) {
            let mean: f64 = rx.iter().map(|&v| v as f64).sum::<f64>() / rx.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!(rx.iter().all(|v| v.abs() <= 2.0));
        }
    }

    #[test]
    fn frame_rejects_wide_codes() {
        let shape = CubeShape {
            n_rx: 1,
            n_chirps: 1,
            n_samples: 2,
        };
        assert!(FrameCube::new(shape, vec![0, 4096], Label::Per1).is_err());
        assert!(FrameCube::new(shape, vec![0], Label::Per1).is_err());
    }

    fn labelled(per_class: usize) -> Dataset {
        let mut frames = Vec::new();
        for label in [Label::Per1, Label::Per2, Label::Per3] {
            for i in 0..per_class {
                frames.push(frame(i as u16, label));
            }
        }
        Dataset::from_frames(CubeShape::default(), frames).unwrap()
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let ds = labelled(100);
        let (train, test) = split(&ds, 0.9, 7);
        for l in Label::ID {
            assert_eq!(train.count(l), 90);
            assert_eq!(test.count(l), 10);
        }
        let mut all: Vec<_> = train
            .frames
            .iter()
            .chain(&test.frames)
            .map(|f| (f.label, f.codes[0]))
            .collect();
        all.sort();
        let mut orig: Vec<_> = ds.frames.iter().map(|f| (f.label, f.codes[0])).collect();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_depends_on_seed_only() {
        let ds = labelled(100);
        let a = split(&ds, 0.9, 1);
        let b = split(&ds, 0.9, 1);
        let c = split(&ds, 0.9, 2);
        assert_eq!(a, b);
        assert_ne!(a.1, c.1);
    }
}
