//! Synthetic FMCW frames.
//!
//! Each scatterer at range `R` contributes an IF tone at the beat frequency
//! `f_b = 2 R B / (c T_c)` on every chirp. Per frame, every scatterer gets a
//! uniformly random carrier phase (sub-wavelength motion of the face); per
//! chirp the phase drifts linearly and picks up Gaussian jitter. Receivers
//! differ by gain only.
//!
//! ```text
//! x[r, c, s] = g_r * sum_k A_k cos(2 pi f_k s / f_adc + phi_k + drift * c + n_kc) + noise
//! code       = round(2048 + x[r, c, s])
//! ```

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Dataset, FrameCube, Label, RadarConfig, ADC_MAX, ADC_MID};

/// Propagation speed used for range/beat conversions, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;
pub const MIN_RANGE_M: f64 = 0.05;
pub const MAX_RANGE_M: f64 = 1.0;
/// Noise is budgeted at this many standard deviations when checking that a
/// profile cannot clip the ADC.
pub const NOISE_HEADROOM_SIGMAS: f64 = 6.0;

/// Default number of distinct unseen identities in the OOD population.
pub const DEFAULT_OOD_IDENTITIES: usize = 13;

/// Range bands OOD scatterers are drawn from. None of them contains a range
/// used by the default enrolled profiles.
pub const OOD_RANGE_BANDS: [(f64, f64); 5] = [
    (0.05, 0.11),
    (0.19, 0.22),
    (0.50, 0.56),
    (0.65, 0.71),
    (0.80, 1.00),
];

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("scatterer range {0} m outside [{MIN_RANGE_M}, {MAX_RANGE_M}] m")]
    RangeOutOfBounds(f64),
    #[error("scatterer amplitude {0} must be a finite non-negative number")]
    Amplitude(f64),
    #[error("{0} must be finite and non-negative")]
    Parameter(&'static str),
    #[error("profile has {got} receiver gains, radar has {want} receivers")]
    Gains { got: usize, want: usize },
    #[error("peak amplitude {peak:.1} codes exceeds the {max} code headroom")]
    Clipping { peak: f64, max: f64 },
    #[error("profile file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Point reflector on the face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub range_m: f64,
    /// Peak IF amplitude in ADC codes at unit receiver gain.
    pub amplitude: f64,
    /// Standard deviation of the per-chirp phase jitter, radians.
    pub phase_jitter_std: f64,
}

impl Scatterer {
    pub fn new(range_m: f64, amplitude: f64, phase_jitter_std: f64) -> Self {
        Self {
            range_m,
            amplitude,
            phase_jitter_std,
        }
    }
}

/// Parameters of one synthetic person.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProfile {
    pub scatterers: Vec<Scatterer>,
    pub rx_gain: Vec<f64>,
    /// Additive white noise, ADC codes.
    pub noise_std: f64,
    /// Phase advance per chirp, radians.
    pub drift: f64,
}

impl SyntheticProfile {
    /// Built-in enrolled profiles with 2, 3 and 4 scatterers. All share a face
    /// return at 25 cm; the strongest return sits at 0.15, 0.45 and 0.75 m,
    /// i.e. range bins 1, 3 and 5 of a 128-point fast-time FFT.
    pub fn default_id(class: usize) -> Self {
        let s = Scatterer::new;
        match class {
            0 => Self {
                scatterers: vec![s(0.15, 520.0, 0.05), s(0.25, 220.0, 0.05)],
                rx_gain: vec![1.0, 0.9, 0.8],
                noise_std: 6.0,
                drift: 0.010,
            },
            1 => Self {
                scatterers: vec![
                    s(0.45, 520.0, 0.05),
                    s(0.25, 220.0, 0.05),
                    s(0.32, 130.0, 0.05),
                ],
                rx_gain: vec![0.85, 1.0, 0.9],
                noise_std: 6.0,
                drift: 0.020,
            },
            2 => Self {
                scatterers: vec![
                    s(0.75, 520.0, 0.05),
                    s(0.25, 220.0, 0.05),
                    s(0.38, 130.0, 0.05),
                    s(0.60, 100.0, 0.05),
                ],
                rx_gain: vec![0.9, 0.8, 1.0],
                noise_std: 6.0,
                drift: 0.015,
            },
            _ => panic!("enrolled class index {class} out of range"),
        }
    }

    pub fn validate(&self, config: &RadarConfig) -> Result<(), ProfileError> {
        for sc in &self.scatterers {
            if !(MIN_RANGE_M..=MAX_RANGE_M).contains(&sc.range_m) {
                return Err(ProfileError::RangeOutOfBounds(sc.range_m));
            }
            if !(sc.amplitude.is_finite() && sc.amplitude >= 0.0) {
                return Err(ProfileError::Amplitude(sc.amplitude));
            }
            if !(sc.phase_jitter_std.is_finite() && sc.phase_jitter_std >= 0.0) {
                return Err(ProfileError::Parameter("phase_jitter_std"));
            }
        }
        if self.rx_gain.len() != config.n_rx {
            return Err(ProfileError::Gains {
                got: self.rx_gain.len(),
                want: config.n_rx,
            });
        }
        if self.rx_gain.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(ProfileError::Parameter("rx_gain"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(ProfileError::Parameter("noise_std"));
        }
        if !self.drift.is_finite() {
            return Err(ProfileError::Parameter("drift"));
        }
        let peak = self.peak_amplitude();
        let max = (ADC_MAX - ADC_MID) as f64 - 0.5;
        if peak > max {
            return Err(ProfileError::Clipping { peak, max });
        }
        Ok(())
    }

    /// Worst-case excursion from mid-scale, noise included at
    /// [`NOISE_HEADROOM_SIGMAS`].
    pub fn peak_amplitude(&self) -> f64 {
        let gain = self.rx_gain.iter().copied().fold(0.0, f64::max);
        let tones: f64 = self.scatterers.iter().map(|s| s.amplitude).sum();
        gain * tones + NOISE_HEADROOM_SIGMAS * self.noise_std
    }

    fn write_block(&self, name: &str, out: &mut String) {
        let _ = writeln!(out, "[{name}]");
        let gains: Vec<String> = self.rx_gain.iter().map(|g| g.to_string()).collect();
        let _ = writeln!(out, "gains = {}", gains.join(", "));
        let _ = writeln!(out, "noise_std = {}", self.noise_std);
        let _ = writeln!(out, "drift = {}", self.drift);
        for s in &self.scatterers {
            let _ = writeln!(
                out,
                "scatterer = {}, {}, {}",
                s.range_m, s.amplitude, s.phase_jitter_std
            );
        }
    }
}

/// IF beat frequency of a target at `range_m`, Hz.
pub fn beat_frequency(range_m: f64, config: &RadarConfig) -> f64 {
    2.0 * range_m * config.bandwidth() / (SPEED_OF_LIGHT * config.chirp_duration())
}

/// Draws one frame of `profile`.
pub fn synth_frame<R: Rng + ?Sized>(
    profile: &SyntheticProfile,
    config: &RadarConfig,
    label: Label,
    rng: &mut R,
) -> Result<FrameCube, ProfileError> {
    profile.validate(config)?;
    let shape = config.shape();
    let omega: Vec<f64> = profile
        .scatterers
        .iter()
        .map(|s| TAU * beat_frequency(s.range_m, config) / config.adc_rate)
        .collect();
    let start: Vec<f64> = profile
        .scatterers
        .iter()
        .map(|_| rng.random_range(0.0..TAU))
        .collect();
    // per chirp, per scatterer phase
    let mut phases = vec![0.0; shape.n_chirps * profile.scatterers.len()];
    for c in 0..shape.n_chirps {
        for (k, sc) in profile.scatterers.iter().enumerate() {
            let jitter = if sc.phase_jitter_std > 0.0 {
                Normal::new(0.0, sc.phase_jitter_std)
                    .expect("validated std")
                    .sample(rng)
            } else {
                0.0
            };
            phases[c * profile.scatterers.len() + k] = start[k] + profile.drift * c as f64 + jitter;
        }
    }
    let noise = (profile.noise_std > 0.0)
        .then(|| Normal::new(0.0, profile.noise_std).expect("validated std"));

    let mut codes = Vec::with_capacity(shape.len());
    let mut tone = vec![0.0; shape.n_samples];
    for &gain in &profile.rx_gain {
        for c in 0..shape.n_chirps {
            tone.fill(0.0);
            for (k, sc) in profile.scatterers.iter().enumerate() {
                let phi = phases[c * profile.scatterers.len() + k];
                for (s, t) in tone.iter_mut().enumerate() {
                    *t += sc.amplitude * (omega[k] * s as f64 + phi).cos();
                }
            }
            for &t in &tone {
                let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
                let v = (ADC_MID as f64 + gain * t + n).round();
                codes.push(v.clamp(0.0, ADC_MAX as f64) as u16);
            }
        }
    }
    Ok(FrameCube {
        shape,
        codes,
        label,
    })
}

/// Mean fast-time magnitude spectrum over all receivers and chirps, one value
/// per positive-frequency bin (`0..=N_s/2`), per-chirp DC removed.
pub fn mean_range_profile(frame: &FrameCube) -> Vec<f64> {
    let n = frame.shape.n_samples;
    let bins = n / 2 + 1;
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| {
            let a = TAU * i as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .unzip();
    let mut acc = vec![0.0; bins];
    let mut count = 0usize;
    for chirp in frame.codes.chunks_exact(n) {
        let mean = chirp.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
        let x: Vec<f64> = chirp.iter().map(|&c| c as f64 - mean).collect();
        for (k, a) in acc.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (s, &v) in x.iter().enumerate() {
                let idx = (k * s) % n;
                re += v * cos[idx];
                im -= v * sin[idx];
            }
            *a += (re * re + im * im).sqrt();
        }
        count += 1;
    }
    acc.iter_mut().for_each(|a| *a /= count.max(1) as f64);
    acc
}

/// Strongest non-DC bin of [`mean_range_profile`].
pub fn dominant_range_bin(frame: &FrameCube) -> usize {
    let p = mean_range_profile(frame);
    (1..p.len())
        .max_by(|&a, &b| p[a].total_cmp(&p[b]))
        .unwrap_or(0)
}

/// Population of unseen people, one profile per identity.
#[derive(Debug, Clone, PartialEq)]
pub struct OodProfiles {
    pub identities: Vec<SyntheticProfile>,
}

impl OodProfiles {
    /// Draws `count` identities with 2 to 4 scatterers whose ranges all fall
    /// in [`OOD_RANGE_BANDS`].
    pub fn generate(count: usize, n_rx: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let identities = (0..count)
            .map(|_| {
                let n = rng.random_range(2..=4);
                let scatterers = (0..n)
                    .map(|i| {
                        let (lo, hi) = OOD_RANGE_BANDS[rng.random_range(0..OOD_RANGE_BANDS.len())];
                        let amplitude = if i == 0 {
                            rng.random_range(380.0..560.0)
                        } else {
                            rng.random_range(80.0..230.0)
                        };
                        Scatterer::new(rng.random_range(lo..hi), amplitude, 0.05)
                    })
                    .collect();
                SyntheticProfile {
                    scatterers,
                    rx_gain: (0..n_rx).map(|_| rng.random_range(0.8..1.0)).collect(),
                    noise_std: 6.0,
                    drift: rng.random_range(0.005..0.025),
                }
            })
            .collect();
        Self { identities }
    }
}

/// Enrolled profiles plus the OOD population.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSuite {
    pub id: [SyntheticProfile; 3],
    pub ood: OodProfiles,
}

impl SyntheticSuite {
    pub fn default_suite(config: &RadarConfig, seed: u64) -> Self {
        Self {
            id: [0, 1, 2].map(SyntheticProfile::default_id),
            ood: OodProfiles::generate(DEFAULT_OOD_IDENTITIES, config.n_rx, seed),
        }
    }

    pub fn validate(&self, config: &RadarConfig) -> Result<(), ProfileError> {
        for p in self.id.iter().chain(&self.ood.identities) {
            p.validate(config)?;
        }
        if self.ood.identities.is_empty() {
            return Err(ProfileError::Parse {
                line: 0,
                msg: "no OOD identities".into(),
            });
        }
        Ok(())
    }

    /// `frames_per_class` frames for each of PER1..PER3 followed by
    /// `ood_frames` OOD frames cycling through the identities. Frame `i` draws
    /// from its own stream of the seeded generator, so the output does not
    /// depend on the number of worker threads.
    pub fn generate(
        &self,
        config: &RadarConfig,
        frames_per_class: usize,
        ood_frames: usize,
        seed: u64,
    ) -> Result<Dataset, ProfileError> {
        self.validate(config)?;
        let jobs: Vec<(Label, &SyntheticProfile)> = Label::ID
            .iter()
            .zip(&self.id)
            .flat_map(|(&l, p)| std::iter::repeat_n((l, p), frames_per_class))
            .chain((0..ood_frames).map(|i| {
                (
                    Label::Ood,
                    &self.ood.identities[i % self.ood.identities.len()],
                )
            }))
            .collect();
        let frames = jobs
            .par_iter()
            .enumerate()
            .map(|(i, &(label, profile))| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                synth_frame(profile, config, label, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            shape: config.shape(),
            frames,
        })
    }

    /// Text form accepted by [`SyntheticSuite::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "# synthetic profiles: one block per enrolled class, one [OOD] block per identity\n",
        );
        for (p, name) in self.id.iter().zip(["PER1", "PER2", "PER3"]) {
            p.write_block(name, &mut out);
        }
        for p in &self.ood.identities {
            p.write_block("OOD", &mut out);
        }
        out
    }

    /// Parses a profile file. Enrolled blocks missing from the file keep
    /// their defaults; when no `[OOD]` block is present the identities are
    /// drawn from `seed`.
    pub fn parse(text: &str, config: &RadarConfig, seed: u64) -> Result<Self, ProfileError> {
        let mut suite = Self::default_suite(config, seed);
        let mut ood = Vec::new();
        let mut current: Option<(String, SyntheticProfile)> = None;

        let finish = |cur: Option<(String, SyntheticProfile)>,
                      suite: &mut SyntheticSuite,
                      ood: &mut Vec<SyntheticProfile>| {
            if let Some((name, p)) = cur {
                match name.as_str() {
                    "PER1" => suite.id[0] = p,
                    "PER2" => suite.id[1] = p,
                    "PER3" => suite.id[2] = p,
                    _ => ood.push(p),
                }
            }
        };

        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| ProfileError::Parse { line: line_no, msg };
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_ascii_uppercase();
                if !matches!(name.as_str(), "PER1" | "PER2" | "PER3" | "OOD") {
                    return Err(perr(format!("unknown block [{name}]")));
                }
                finish(current.take(), &mut suite, &mut ood);
                current = Some((
                    name,
                    SyntheticProfile {
                        scatterers: Vec::new(),
                        rx_gain: vec![1.0; config.n_rx],
                        noise_std: 0.0,
                        drift: 0.0,
                    },
                ));
                continue;
            }
            let Some((_, profile)) = current.as_mut() else {
                return Err(perr("key outside of a block".into()));
            };
            let Some((key, value)) = line.split_once('=') else {
                return Err(perr(format!("expected key = value, got {line:?}")));
            };
            let numbers = value
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| perr(format!("{}: {e}", key.trim())))?;
            let single = |what: &str| -> Result<f64, ProfileError> {
                match numbers.as_slice() {
                    [v] => Ok(*v),
                    _ => Err(perr(format!("{what} takes one number"))),
                }
            };
            match key.trim() {
                "gains" => profile.rx_gain = numbers.clone(),
                "noise_std" => profile.noise_std = single("noise_std")?,
                "drift" => profile.drift = single("drift")?,
                "scatterer" => match numbers.as_slice() {
                    [r, a, j] => profile.scatterers.push(Scatterer::new(*r, *a, *j)),
                    _ => {
                        return Err(perr(
                            "scatterer = range_m, amplitude, phase_jitter_std".into(),
                        ))
                    }
                },
                other => return Err(perr(format!("unknown key {other:?}"))),
            }
        }
        finish(current, &mut suite, &mut ood);
        if !ood.is_empty() {
            suite.ood = OodProfiles { identities: ood };
        }
        suite.validate(config)?;
        Ok(suite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RadarConfig {
        RadarConfig::default()
    }

    #[test]
    fn beat_frequency_examples() {
        let c = cfg();
        assert!((beat_frequency(0.25, &c) - 26041.666_666).abs() < 1e-3);
        assert_eq!(beat_frequency(0.0, &c), 0.0);
        assert!((beat_frequency(0.5, &c) - 2.0 * beat_frequency(0.25, &c)).abs() < 1e-9);
    }

    #[test]
    fn silent_profile_is_mid_scale() {
        let p = SyntheticProfile {
            scatterers: vec![],
            rx_gain: vec![1.0; 3],
            noise_std: 0.0,
            drift: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = synth_frame(&p, &cfg(), Label::Unlabeled, &mut rng).unwrap();
        assert!(f.codes.iter().all(|&c| c == ADC_MID));
    }

    #[test]
    fn single_scatterer_period_from_zero_crossings() {
        let p = SyntheticProfile {
            scatterers: vec![Scatterer::new(0.25, 1000.0, 0.0)],
            rx_gain: vec![1.0; 3],
            noise_std: 0.0,
            drift: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = synth_frame(&p, &cfg(), Label::Unlabeled, &mut rng).unwrap();
        let expected = cfg().adc_rate / beat_frequency(0.25, &cfg());
        assert!((expected - 76.8).abs() < 1e-9);
        for chirp in [0, 17, 63] {
            let x: Vec<f64> = f
                .chirp(0, chirp)
                .iter()
                .map(|&c| c as f64 - 2048.0)
                .collect();
            // interpolated zero crossings
            let crossings: Vec<f64> = x
                .windows(2)
                .enumerate()
                .filter(|(_, w)| (w[0] < 0.0) != (w[1] < 0.0))
                .map(|(i, w)| i as f64 + w[0] / (w[0] - w[1]))
                .collect();
            assert!(crossings.len() >= 3, "{crossings:?}");
            let half_periods =
                (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
            let period = 2.0 * half_periods;
            assert!(
                (period - expected).abs() / expected < 0.02,
                "period {period}"
            );
        }
    }

    #[test]
    fn same_seed_same_frame() {
        let p = SyntheticProfile::default_id(1);
        let a = synth_frame(&p, &cfg(), Label::Per2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = synth_frame(&p, &cfg(), Label::Per2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = synth_frame(&p, &cfg(), Label::Per2, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn out_of_bounds_scatterer_is_rejected() {
        let mut p = SyntheticProfile::default_id(0);
        p.scatterers.push(Scatterer::new(1.5, 10.0, 0.0));
        let err = synth_frame(&p, &cfg(), Label::Per1, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(err.unwrap_err(), ProfileError::RangeOutOfBounds(1.5));
        let mut p = SyntheticProfile::default_id(0);
        p.scatterers[0].range_m = 0.01;
        assert!(p.validate(&cfg()).is_err());
    }

    #[test]
    fn clipping_budget_is_enforced() {
        let mut p = SyntheticProfile::default_id(0);
        p.scatterers[0].amplitude = 1900.0;
        assert!(matches!(
            p.validate(&cfg()),
            Err(ProfileError::Clipping { .. })
        ));
    }

    #[test]
    fn default_profiles_are_valid_and_separable() {
        let c = cfg();
        let suite = SyntheticSuite::default_suite(&c, 1);
        suite.validate(&c).unwrap();
        let ds = suite.generate(&c, 6, 0, 42).unwrap();
        let mut mean_bins = Vec::new();
        for label in Label::ID {
            let bins: Vec<f64> = ds
                .with_label(label)
                .map(|f| dominant_range_bin(f) as f64)
                .collect();
            mean_bins.push(bins.iter().sum::<f64>() / bins.len() as f64);
        }
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(
                    (mean_bins[i] - mean_bins[j]).abs() >= 2.0,
                    "mean dominant bins {mean_bins:?}"
                );
            }
        }
    }

    #[test]
    fn ood_ranges_avoid_enrolled_ranges() {
        let suite = SyntheticSuite::default_suite(&cfg(), 5);
        let id_ranges: Vec<f64> = suite
            .id
            .iter()
            .flat_map(|p| p.scatterers.iter().map(|s| s.range_m))
            .collect();
        for p in &suite.ood.identities {
            assert!((2..=4).contains(&p.scatterers.len()));
            for s in &p.scatterers {
                assert!(OOD_RANGE_BANDS
                    .iter()
                    .any(|(lo, hi)| (*lo..=*hi).contains(&s.range_m)));
                assert!(id_ranges.iter().all(|r| (r - s.range_m).abs() > 0.02));
            }
        }
    }

    #[test]
    fn generation_layout_and_determinism() {
        let c = cfg();
        let suite = SyntheticSuite::default_suite(&c, 2);
        let a = suite.generate(&c, 3, 4, 11).unwrap();
        assert_eq!(a.len(), 13);
        assert_eq!(a.count(Label::Per3), 3);
        assert_eq!(a.count(Label::Ood), 4);
        assert_eq!(a, suite.generate(&c, 3, 4, 11).unwrap());
    }

    #[test]
    fn profile_text_round_trip() {
        let c = cfg();
        let suite = SyntheticSuite::default_suite(&c, 3);
        let parsed = SyntheticSuite::parse(&suite.to_text(), &c, 999).unwrap();
        assert_eq!(parsed, suite);
    }

    #[test]
    fn profile_parse_errors_name_the_line() {
        let c = cfg();
        let err = SyntheticSuite::parse("[PER1]\nscatterer = 0.2, 1\n", &c, 0).unwrap_err();
        assert!(matches!(err, ProfileError::Parse { line: 2, .. }), "{err}");
        let err = SyntheticSuite::parse("noise_std = 1\n", &c, 0).unwrap_err();
        assert!(matches!(err, ProfileError::Parse { line: 1, .. }));
        let err = SyntheticSuite::parse("[PER9]\n", &c, 0).unwrap_err();
        assert!(matches!(err, ProfileError::Parse { .. }));
    }
}
