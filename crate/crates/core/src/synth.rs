//! Seeded synthetic corpus generator.
//!
//! Each utterance is driven by a smooth latent "articulator" trajectory
//! `z(t) ∈ R^L`: a word-specific sum of Gaussian bumps, jittered per
//! utterance. Every EMG channel is a sum of band-limited noise carriers, one
//! per frequency band, whose amplitude envelope is
//!
//! ```text
//! env[c][b](t) = base · speaker_gain · A_word[c][b] · exp(G[c][b] · z(t))
//! ```
//!
//! where `A_word` is the word's channel×band activation template and `G` a
//! fixed channel×band×latent coupling. The acoustic track is `M · z(t)`
//! sampled at 50 Hz, so log band power of the EMG is, up to carrier
//! fluctuation, a linear function of the acoustic features.

use crate::acoustic::{AcousticFeatureSet, AcousticFeatureTrack, AcousticSource, ACOUSTIC_DIM, ACOUSTIC_RATE_HZ};
use crate::dataset::{
    default_roles, ChannelRole, Dataset, DatasetError, Provenance, Utterance, ADC_MAX, ADC_MIN,
    DEFAULT_SAMPLE_RATE_HZ, DEFAULT_VOLTS_PER_LSB, UTTERANCE_SAMPLES,
};
use crate::matrix::Matrix;
use crate::par::{self, Execution};
use crate::seed;
use crate::word::Word;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("template for '{word}' has shape {got:?}, expected {expected:?}")]
    TemplateShape {
        word: Word,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("templates for '{0}' and '{1}' are identical")]
    DuplicateTemplate(Word, Word),
    #[error("{0}")]
    Dataset(String),
}

impl From<DatasetError> for SynthError {
    fn from(e: DatasetError) -> Self {
        SynthError::Dataset(e.to_string())
    }
}

/// Scalar knobs of the generator. Everything else is derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub latent_dim: usize,
    /// Additive white ADC noise, in LSB.
    pub noise_std: f64,
    pub speakers: Vec<u8>,
    pub utterances_per_cell: usize,
    pub channel_count: usize,
    pub n_bands: usize,
    pub sample_rate_hz: u32,
    pub duration_samples: usize,
    pub acoustic_dim: usize,
    /// Resting per-band amplitude, in LSB.
    pub base_amplitude: f64,
    /// Scale of the latent → log-envelope coupling.
    pub coupling_gain: f64,
    /// Spread of word activation templates (log units) on neck channels.
    pub neck_contrast: f64,
    /// Face-channel template spread for lip-dominated words and for the rest.
    pub face_contrast_labial: f64,
    pub face_contrast_other: f64,
    /// Per-utterance amplitude jitter of the latent bumps (relative).
    pub latent_jitter: f64,
    /// Timing jitter of the latent trajectory, in seconds.
    pub timing_jitter_s: f64,
    /// Amplitude of extra random latent bumps.
    pub latent_noise: f64,
    /// Soft limit on the log-envelope drive, `D·tanh(x/D)`, keeping peaks
    /// inside the ADC range.
    pub drive_limit: f64,
    pub speaker_gains: BTreeMap<u8, f64>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 2024,
            latent_dim: 8,
            noise_std: 40.0,
            speakers: vec![1, 2],
            utterances_per_cell: 10,
            channel_count: 13,
            n_bands: 8,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            duration_samples: UTTERANCE_SAMPLES,
            acoustic_dim: ACOUSTIC_DIM,
            base_amplitude: 20.0,
            coupling_gain: 2.5,
            neck_contrast: 0.15,
            face_contrast_labial: 1.0,
            face_contrast_other: 0.25,
            latent_jitter: 0.5,
            timing_jitter_s: 0.08,
            latent_noise: 0.8,
            drive_limit: 3.0,
            speaker_gains: [(1, 1.0), (2, 0.85)].into_iter().collect(),
            execution: Execution::default(),
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        SynthConfig { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        if self.channel_count == 0 || self.n_bands == 0 || self.acoustic_dim == 0 {
            return bad("channel_count, n_bands and acoustic_dim must be positive");
        }
        if self.sample_rate_hz == 0 || self.duration_samples < 3 {
            return bad("sample rate must be positive and duration at least 3 samples");
        }
        if self.speakers.is_empty() {
            return bad("at least one speaker is required");
        }
        if !(self.drive_limit > 0.0) {
            return bad("drive_limit must be positive");
        }
        if !(self.noise_std >= 0.0) || !(self.base_amplitude > 0.0) {
            return bad("noise_std must be >= 0 and base_amplitude > 0");
        }
        if let Some(s) = self.speakers.iter().find(|s| !self.speaker_gains.contains_key(s)) {
            return Err(SynthError::InvalidConfig(format!("no gain for speaker {s}")));
        }
        Ok(())
    }
}

/// Word-specific latent trajectory: bumps per latent dimension.
#[derive(Debug, Clone, PartialEq)]
struct Bump {
    center_s: f64,
    width_s: f64,
    amplitude: f64,
}

/// The fully materialized generative model.
#[derive(Debug, Clone)]
pub struct SynthModel {
    pub config: SynthConfig,
    /// Per word: `[channel][band]` log-activation, i.e. `ln A_word`.
    pub templates: BTreeMap<Word, Matrix>,
    /// `[channel * n_bands + band][latent]`.
    pub coupling: Matrix,
    /// `[acoustic_dim][latent]`.
    pub acoustic_mixing: Matrix,
    pub acoustic_offset: Vec<f64>,
    word_bumps: BTreeMap<Word, Vec<Vec<Bump>>>,
    roles: Vec<ChannelRole>,
}

const BUMPS_PER_DIM: usize = 3;
const BUMP_WIDTH_S: f64 = 0.1;

fn gauss(t: f64, b: &Bump) -> f64 {
    let d = (t - b.center_s) / b.width_s;
    b.amplitude * (-0.5 * d * d).exp()
}

impl SynthModel {
    pub fn new(config: SynthConfig) -> Result<Self, SynthError> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(config.seed, 0xA11));
        let roles = default_roles(config.channel_count);
        let dur_s = config.duration_samples as f64 / config.sample_rate_hz as f64;
        let normal = StandardNormal;

        let mut templates = BTreeMap::new();
        let mut word_bumps = BTreeMap::new();
        for w in Word::ALL {
            let mut t = Matrix::zeros(config.channel_count, config.n_bands);
            for (c, role) in roles.iter().enumerate() {
                let contrast = match role {
                    ChannelRole::Neck => config.neck_contrast,
                    ChannelRole::Face if w.is_labial() => config.face_contrast_labial,
                    ChannelRole::Face => config.face_contrast_other,
                };
                for b in 0..config.n_bands {
                    let g: f64 = normal.sample(&mut rng);
                    t.set(c, b, contrast * g);
                }
            }
            templates.insert(w, t);

            let bumps: Vec<Vec<Bump>> = (0..config.latent_dim)
                .map(|_| {
                    (0..BUMPS_PER_DIM)
                        .map(|_| {
                            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                            Bump {
                                center_s: rng.random_range(0.2 * dur_s..0.8 * dur_s),
                                width_s: BUMP_WIDTH_S * rng.random_range(0.8..1.4),
                                amplitude: sign * rng.random_range(0.6..1.4),
                            }
                        })
                        .collect()
                })
                .collect();
            word_bumps.insert(w, bumps);
        }

        let rows = config.channel_count * config.n_bands;
        let scale = config.coupling_gain / (config.latent_dim as f64).sqrt();
        let mut coupling = Matrix::zeros(rows, config.latent_dim);
        for r in 0..rows {
            for l in 0..config.latent_dim {
                let g: f64 = normal.sample(&mut rng);
                coupling.set(r, l, scale * g);
            }
        }

        let mut acoustic_mixing = Matrix::zeros(config.acoustic_dim, config.latent_dim);
        let mscale = 1.0 / (config.latent_dim as f64).sqrt();
        for r in 0..config.acoustic_dim {
            for l in 0..config.latent_dim {
                let g: f64 = normal.sample(&mut rng);
                acoustic_mixing.set(r, l, mscale * g);
            }
        }
        let acoustic_offset = (0..config.acoustic_dim)
            .map(|_| {
                let g: f64 = normal.sample(&mut rng);
                0.1 * g
            })
            .collect();

        let model = SynthModel {
            config,
            templates,
            coupling,
            acoustic_mixing,
            acoustic_offset,
            word_bumps,
            roles,
        };
        model.check_templates()?;
        Ok(model)
    }

    fn check_templates(&self) -> Result<(), SynthError> {
        let expected = (self.config.channel_count, self.config.n_bands);
        for (w, t) in &self.templates {
            if t.shape() != expected {
                return Err(SynthError::TemplateShape {
                    word: *w,
                    got: t.shape(),
                    expected,
                });
            }
        }
        if self.templates.len() != Word::ALL.len() {
            return Err(SynthError::InvalidConfig("a template is required for every word".into()));
        }
        let words: Vec<_> = self.templates.keys().copied().collect();
        for i in 0..words.len() {
            for j in i + 1..words.len() {
                if self.templates[&words[i]] == self.templates[&words[j]] {
                    return Err(SynthError::DuplicateTemplate(words[i], words[j]));
                }
            }
        }
        let rows = self.config.channel_count * self.config.n_bands;
        if self.coupling.shape() != (rows, self.config.latent_dim)
            || self.acoustic_mixing.shape() != (self.config.acoustic_dim, self.config.latent_dim)
        {
            return Err(SynthError::InvalidConfig("coupling or mixing shape mismatch".into()));
        }
        Ok(())
    }

    /// Latent trajectory `[latent][time]` for one utterance, evaluated at the
    /// given times (seconds).
    fn latent_at<R: Rng>(&self, word: Word, times: &[f64], rng: &mut R) -> (Vec<Vec<Bump>>, Vec<Vec<f64>>) {
        let cfg = &self.config;
        let shift = cfg.timing_jitter_s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        let dur_s = cfg.duration_samples as f64 / cfg.sample_rate_hz as f64;
        let bumps: Vec<Vec<Bump>> = self.word_bumps[&word]
            .iter()
            .map(|dim| {
                let mut v: Vec<Bump> = dim
                    .iter()
                    .map(|b| {
                        let j: f64 = StandardNormal.sample(rng);
                        Bump {
                            center_s: b.center_s + shift,
                            width_s: b.width_s,
                            amplitude: b.amplitude * (1.0 + cfg.latent_jitter * j),
                        }
                    })
                    .collect();
                let extra: f64 = StandardNormal.sample(rng);
                v.push(Bump {
                    center_s: rng.random_range(0.1 * dur_s..0.9 * dur_s),
                    width_s: BUMP_WIDTH_S,
                    amplitude: cfg.latent_noise * extra,
                });
                v
            })
            .collect();
        let z = bumps
            .iter()
            .map(|dim| times.iter().map(|&t| dim.iter().map(|b| gauss(t, b)).sum()).collect())
            .collect();
        (bumps, z)
    }

    /// Unit-RMS band-limited noise carriers `[band][time]` for one channel.
    fn carriers<R: Rng>(&self, planner: &mut FftPlanner<f64>, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let fs = self.config.sample_rate_hz as f64;
        let nb = self.config.n_bands;
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut spec: Vec<Complex<f64>> = (0..n)
            .map(|_| Complex::new(StandardNormal.sample(rng), 0.0))
            .collect();
        fwd.process(&mut spec);
        let band_width = fs / 2.0 / nb as f64;
        (0..nb)
            .map(|b| {
                let lo = b as f64 * band_width;
                let hi = (b + 1) as f64 * band_width;
                let mut buf: Vec<Complex<f64>> = spec
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let f = k.min(n - k) as f64 * fs / n as f64;
                        let inside = f >= lo && (f < hi || (b + 1 == nb && f <= hi));
                        if inside {
                            *v
                        } else {
                            Complex::new(0.0, 0.0)
                        }
                    })
                    .collect();
                inv.process(&mut buf);
                let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
                let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
                if rms > 0.0 {
                    x.iter().map(|v| v / rms).collect()
                } else {
                    x
                }
            })
            .collect()
    }

    /// Renders one utterance of `word` by `speaker` from `utt_seed`. Returns
    /// per-channel ADC codes and the acoustic track.
    pub fn render(
        &self,
        word: Word,
        speaker: u8,
        utt_seed: u64,
    ) -> (Vec<Vec<i16>>, AcousticTrackData) {
        let cfg = &self.config;
        let mut rng = seed::rng(utt_seed);
        let n = cfg.duration_samples;
        let fs = cfg.sample_rate_hz as f64;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
        let (bumps, z) = self.latent_at(word, &times, &mut rng);

        let gain = cfg.speaker_gains[&speaker];
        let template = &self.templates[&word];
        let mut planner = FftPlanner::new();
        let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite noise std");
        let mut channels = Vec::with_capacity(cfg.channel_count);
        for c in 0..cfg.channel_count {
            let carriers = self.carriers(&mut planner, n, &mut rng);
            let mut x = vec![0.0; n];
            for (b, carrier) in carriers.iter().enumerate() {
                let row = self.coupling.row(c * cfg.n_bands + b);
                let amp = cfg.base_amplitude * gain * template.get(c, b).exp();
                for t in 0..n {
                    let drive: f64 = row.iter().zip(&z).map(|(g, zl)| g * zl[t]).sum();
                    let drive = cfg.drive_limit * (drive / cfg.drive_limit).tanh();
                    x[t] += amp * drive.exp() * carrier[t];
                }
            }
            let codes = x
                .iter()
                .map(|v| {
                    let noisy = if cfg.noise_std > 0.0 { v + noise.sample(&mut rng) } else { *v };
                    noisy.round().clamp(ADC_MIN as f64, ADC_MAX as f64) as i16
                })
                .collect();
            channels.push(codes);
        }

        // acoustic frames at the centers of 20 ms steps
        let dur_s = n as f64 / fs;
        let n_frames = (dur_s * ACOUSTIC_RATE_HZ).round() as usize;
        let mut frames = Vec::with_capacity(n_frames * cfg.acoustic_dim);
        for f in 0..n_frames {
            let t = (f as f64 + 0.5) / ACOUSTIC_RATE_HZ;
            let zt: Vec<f64> = bumps.iter().map(|dim| dim.iter().map(|b| gauss(t, b)).sum()).collect();
            for d in 0..cfg.acoustic_dim {
                let v = self.acoustic_offset[d]
                    + self.acoustic_mixing.row(d).iter().zip(&zt).map(|(m, z)| m * z).sum::<f64>();
                frames.push(v as f32);
            }
        }
        (
            channels,
            AcousticTrackData {
                rate_hz: ACOUSTIC_RATE_HZ,
                dim: cfg.acoustic_dim,
                frames,
            },
        )
    }

    /// A quiet resting-state recording of `n` samples (carriers at a tenth
    /// of the resting amplitude plus ADC noise).
    pub fn render_rest(&self, n: usize, rest_seed: u64) -> Vec<Vec<i16>> {
        let cfg = &self.config;
        let mut rng = seed::rng(rest_seed);
        let mut planner = FftPlanner::new();
        let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite noise std");
        (0..cfg.channel_count)
            .map(|_| {
                let carriers = self.carriers(&mut planner, n, &mut rng);
                (0..n)
                    .map(|t| {
                        let v: f64 = carriers.iter().map(|c| 0.1 * cfg.base_amplitude * c[t]).sum();
                        let noisy = if cfg.noise_std > 0.0 { v + noise.sample(&mut rng) } else { v };
                        noisy.round().clamp(ADC_MIN as f64, ADC_MAX as f64) as i16
                    })
                    .collect()
            })
            .collect()
    }

    pub fn utterance_seed(&self, word: Word, speaker: u8, rep: usize) -> u64 {
        seed::derive_path(self.config.seed, &[0xC0, speaker as u64, word.id() as u64, rep as u64])
    }

    pub fn utterance_id(word: Word, speaker: u8, rep: usize) -> String {
        format!("s{speaker}_{}_{rep:02}", word.text())
    }

    /// Generates the balanced corpus and its paired acoustic tracks.
    pub fn generate(&self) -> Result<(Dataset, AcousticFeatureSet), SynthError> {
        self.check_templates()?;
        let cfg = &self.config;
        let mut jobs = Vec::new();
        for &s in &cfg.speakers {
            for w in Word::ALL {
                for rep in 0..cfg.utterances_per_cell {
                    jobs.push((s, w, rep));
                }
            }
        }
        let rendered = par::map_slice(cfg.execution, &jobs, |&(s, w, rep)| {
            self.render(w, s, self.utterance_seed(w, s, rep))
        });

        let mut utterances = Vec::with_capacity(jobs.len());
        let mut tracks = BTreeMap::new();
        for (&(s, w, rep), (samples, acoustic)) in jobs.iter().zip(rendered) {
            let id = Self::utterance_id(w, s, rep);
            utterances.push(Utterance::new(
                id.clone(),
                s,
                w,
                cfg.sample_rate_hz,
                DEFAULT_VOLTS_PER_LSB,
                samples,
            )?);
            let track = AcousticFeatureTrack::new(id.clone(), acoustic.rate_hz, acoustic.dim, acoustic.frames)
                .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
            tracks.insert(id, track);
        }
        let ds = Dataset::new(utterances, self.roles.clone(), Provenance::Synthetic { seed: cfg.seed })?;
        let set = AcousticFeatureSet {
            tracks,
            source: AcousticSource::Synthetic { seed: cfg.seed },
        };
        Ok((ds, set))
    }
}

/// Raw acoustic frames produced alongside an utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticTrackData {
    pub rate_hz: f64,
    pub dim: usize,
    /// Row-major `[frame][dim]`.
    pub frames: Vec<f32>,
}

/// Builds the model for `config` and generates the full corpus.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(Dataset, AcousticFeatureSet), SynthError> {
    SynthModel::new(config.clone())?.generate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::encode_emg;

    fn small() -> SynthConfig {
        SynthConfig {
            utterances_per_cell: 1,
            speakers: vec![1],
            acoustic_dim: 16,
            ..SynthConfig::with_seed(7)
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let (a, fa) = generate_synthetic(&small()).unwrap();
        let (b, fb) = generate_synthetic(&SynthConfig { execution: Execution::Sequential, ..small() }).unwrap();
        assert_eq!(a, b);
        assert_eq!(fa, fb);
        for (x, y) in a.utterances.iter().zip(&b.utterances) {
            assert_eq!(encode_emg(x), encode_emg(y));
        }
        let (c, _) = generate_synthetic(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.utterances[0], c.utterances[0]);
    }

    #[test]
    fn noiseless_equal_seeds_give_equal_samples() {
        let m = SynthModel::new(SynthConfig { noise_std: 0.0, ..small() }).unwrap();
        let (x, ax) = m.render(Word::Kale, 1, 42);
        let (y, ay) = m.render(Word::Kale, 1, 42);
        assert_eq!(x, y);
        assert_eq!(ax, ay);
        let (z, _) = m.render(Word::Kale, 1, 43);
        assert_ne!(x, z);
    }

    #[test]
    fn shapes_and_ranges() {
        let (ds, feats) = generate_synthetic(&small()).unwrap();
        assert_eq!(ds.len(), 11);
        assert_eq!(feats.tracks.len(), 11);
        for u in &ds.utterances {
            assert_eq!(u.channel_count(), 13);
            assert_eq!(u.duration_samples(), 1500);
            let t = &feats.tracks[&u.id];
            assert_eq!(t.frame_count(), 75);
            assert_eq!(t.dim(), 16);
        }
        assert_eq!(ds.utterances[0].id, "s1_heed_00");
    }

    #[test]
    fn templates_are_distinct() {
        let m = SynthModel::new(small()).unwrap();
        let words: Vec<_> = m.templates.keys().collect();
        for i in 0..words.len() {
            for j in i + 1..words.len() {
                let a = &m.templates[words[i]];
                let b = &m.templates[words[j]];
                let dist: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).powi(2)).sum();
                assert!(dist > 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            SynthModel::new(SynthConfig { latent_dim: 0, ..small() }),
            Err(SynthError::InvalidConfig(_))
        ));
        assert!(SynthModel::new(SynthConfig { channel_count: 0, ..small() }).is_err());
        assert!(SynthModel::new(SynthConfig { speakers: vec![3], ..small() }).is_err());

        let mut m = SynthModel::new(small()).unwrap();
        m.templates.insert(Word::Aba, Matrix::zeros(2, 2));
        assert!(matches!(m.generate(), Err(SynthError::TemplateShape { word: Word::Aba, .. })));

        let mut m = SynthModel::new(small()).unwrap();
        let t = m.templates[&Word::Heed].clone();
        m.templates.insert(Word::Had, t);
        assert!(matches!(m.generate(), Err(SynthError::DuplicateTemplate(Word::Heed, Word::Had))));
    }

    #[test]
    fn carriers_are_unit_rms_and_band_limited() {
        let m = SynthModel::new(small()).unwrap();
        let mut planner = FftPlanner::new();
        let c = m.carriers(&mut planner, 1500, &mut seed::rng(1));
        assert_eq!(c.len(), 8);
        for band in &c {
            let rms = (band.iter().map(|v| v * v).sum::<f64>() / 1500.0).sqrt();
            assert!((rms - 1.0).abs() < 1e-9);
        }
        // bands are spectrally disjoint, hence orthogonal
        let dot: f64 = c[1].iter().zip(&c[5]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-6);
    }
}
