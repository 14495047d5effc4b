use super::{ExperimentError, REPORT_SCHEMA_VERSION};
use crate::acoustic::{AcousticFeatureSet, AcousticFeatureTrack, AcousticSource};
use crate::dataset::{ChannelSet, Dataset};
use crate::dsp::{flatten_spectrogram, interp_to_length, spectrogram_of_signals, SpectrogramConfig};
use crate::learn::{make_splits, mean, pearson, LinearModel, OlsFactor, Ridge};
use crate::matrix::Matrix;
use crate::par::{self, Execution};
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Pearson r per utterance, averaged over utterances with defined r.
    PerUtterance,
    /// One Pearson r over all evaluated frames.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Evaluation {
    /// Fit and score on all utterances.
    InSample,
    /// Fit on a stratified training subset, score the held-out utterances.
    HeldOut { train_frac: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    pub spectrogram: SpectrogramConfig,
    pub channels: ChannelSet,
    pub ridge: Ridge,
    pub threshold: f64,
    pub averaging: Averaging,
    pub evaluation: Evaluation,
    /// Also run the uniform-noise control with this seed.
    pub control_seed: Option<u64>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            spectrogram: SpectrogramConfig::correlation(),
            channels: ChannelSet::Neck10,
            ridge: Ridge::Auto,
            threshold: 0.5,
            averaging: Averaging::PerUtterance,
            evaluation: Evaluation::InSample,
            control_seed: None,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub schema_version: u32,
    pub channels: Vec<usize>,
    pub nfft: usize,
    pub n_bins: usize,
    pub n_frames: usize,
    pub n_dims: usize,
    pub n_utterances: usize,
    pub n_rows: usize,
    pub acoustic_dim: usize,
    pub ridge_lambda: f64,
    pub threshold: f64,
    pub averaging: Averaging,
    pub evaluation: Evaluation,
    /// Mean r per EMG dim (channel-major, bin-ascending); `None` when no
    /// evaluated utterance gives a defined r.
    pub per_dim_r: Vec<Option<f64>>,
    pub undefined_dims: Vec<usize>,
    pub fraction_ge_threshold: f64,
    pub control_fraction: Option<f64>,
}

impl CorrelationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} EMG dims ({} ch x {} bins), {} utterances x {} frames, acoustic dim {}\n",
            self.n_dims,
            self.channels.len(),
            self.n_bins,
            self.n_utterances,
            self.n_frames,
            self.acoustic_dim
        );
        s.push_str(&format!(
            "fraction of dims with mean r >= {}: {:.4}\n",
            self.threshold, self.fraction_ge_threshold
        ));
        if let Some(c) = self.control_fraction {
            s.push_str(&format!("uniform-noise control: {:.4}\n", c));
        }
        if !self.undefined_dims.is_empty() {
            s.push_str(&format!("{} dims with undefined r\n", self.undefined_dims.len()));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dim,channel,bin,mean_r\n");
        for (d, r) in self.per_dim_r.iter().enumerate() {
            let ch = self.channels[d / self.n_bins];
            let r = r.map_or(String::new(), |v| v.to_string());
            s.push_str(&format!("{d},{ch},{},{r}\n", d % self.n_bins));
        }
        s
    }
}

/// Replaces every track by seeded uniform [0, 1) noise of the same shape.
pub fn uniform_control(set: &AcousticFeatureSet, seed_v: u64) -> AcousticFeatureSet {
    let tracks: BTreeMap<String, AcousticFeatureTrack> = set
        .tracks
        .iter()
        .enumerate()
        .map(|(i, (id, t))| {
            let mut rng = seed::rng(seed::derive(seed_v, i as u64));
            let frames: Vec<f32> = (0..t.values().len()).map(|_| rng.random::<f32>()).collect();
            let nt = AcousticFeatureTrack::new(id.clone(), t.rate_hz, t.dim(), frames).expect("same shape");
            (id.clone(), nt)
        })
        .collect();
    AcousticFeatureSet {
        tracks,
        source: AcousticSource::Control { seed: seed_v },
    }
}

struct Prepared {
    /// Per utterance: `[emg dim][frame]` log power.
    emg: Vec<Matrix>,
    /// Per utterance: `[acoustic dim][frame]` resampled to the EMG frames.
    acoustic: Vec<Matrix>,
    n_frames: usize,
}

fn prepare(
    ds: &Dataset,
    acoustics: &AcousticFeatureSet,
    channels: &[usize],
    cfg: &CorrelationConfig,
) -> Result<Prepared, ExperimentError> {
    let per = par::map_slice(cfg.execution, &ds.utterances, |u| -> Result<(Matrix, Matrix), ExperimentError> {
        let signals: Vec<Vec<f64>> = channels
            .iter()
            .map(|&c| u.channel(c).iter().map(|&v| v as f64).collect())
            .collect();
        let spec = spectrogram_of_signals(&signals, u.sample_rate_hz as f64, &cfg.spectrogram)?;
        let emg = flatten_spectrogram(&spec, true);
        let track = acoustics.tracks.get(&u.id).ok_or_else(|| ExperimentError::FrameMismatch {
            id: u.id.clone(),
            reason: "no acoustic track".into(),
        })?;
        if track.frame_count() < 2 {
            return Err(ExperimentError::FrameMismatch {
                id: u.id.clone(),
                reason: format!("acoustic track has {} frames", track.frame_count()),
            });
        }
        let ac = interp_to_length(&track.to_dim_major(), emg.cols())?;
        Ok((emg, ac))
    });
    let mut emg = Vec::with_capacity(per.len());
    let mut acoustic = Vec::with_capacity(per.len());
    for r in per {
        let (e, a) = r?;
        emg.push(e);
        acoustic.push(a);
    }
    let n_frames = emg.first().map_or(0, Matrix::cols);
    for (i, (e, a)) in emg.iter().zip(&acoustic).enumerate() {
        if e.cols() != n_frames || e.rows() != emg[0].rows() || a.rows() != acoustic[0].rows() {
            return Err(ExperimentError::FrameMismatch {
                id: ds.utterances[i].id.clone(),
                reason: format!("shape {:?} / {:?} differs from the first utterance", e.shape(), a.shape()),
            });
        }
    }
    Ok(Prepared { emg, acoustic, n_frames })
}

fn predictions(model: &LinearModel, acoustic: &Matrix) -> Vec<f64> {
    (0..acoustic.cols())
        .map(|f| {
            let mut v = model.intercept;
            for (d, w) in model.weights.iter().enumerate() {
                v += w * acoustic.get(d, f);
            }
            v
        })
        .collect()
}

fn fraction_for(
    prepared: &Prepared,
    cfg: &CorrelationConfig,
    train: &[usize],
    eval: &[usize],
) -> Result<(Vec<Option<f64>>, f64), ExperimentError> {
    let n_dims = prepared.emg[0].rows();
    let a_dim = prepared.acoustic[0].rows();
    let t = prepared.n_frames;

    let mut x = Matrix::zeros(train.len() * t, a_dim);
    for (k, &u) in train.iter().enumerate() {
        let a = &prepared.acoustic[u];
        for f in 0..t {
            let row = x.row_mut(k * t + f);
            for (d, slot) in row.iter_mut().enumerate() {
                *slot = a.get(d, f);
            }
        }
    }
    let factor = OlsFactor::new(&x, cfg.ridge, cfg.execution)?;
    drop(x);

    let targets: Vec<Vec<f64>> = par::map_range(cfg.execution, n_dims, |j| {
        train.iter().flat_map(|&u| prepared.emg[u].row(j).to_vec()).collect()
    });
    let models = factor.solve_many(&targets)?;
    drop(targets);

    let per_dim: Vec<Option<f64>> = par::map_range(cfg.execution, n_dims, |j| {
        let model = &models[j];
        match cfg.averaging {
            Averaging::PerUtterance => {
                let rs: Vec<f64> = eval
                    .iter()
                    .filter_map(|&u| pearson(&predictions(model, &prepared.acoustic[u]), prepared.emg[u].row(j)).ok())
                    .collect();
                (!rs.is_empty()).then(|| mean(&rs))
            }
            Averaging::Pooled => {
                let mut p = Vec::with_capacity(eval.len() * t);
                let mut y = Vec::with_capacity(eval.len() * t);
                for &u in eval {
                    p.extend(predictions(model, &prepared.acoustic[u]));
                    y.extend_from_slice(prepared.emg[u].row(j));
                }
                pearson(&p, &y).ok()
            }
        }
    });
    Ok((per_dim, factor.ridge))
}

fn fraction(per_dim: &[Option<f64>], threshold: f64) -> f64 {
    let hits = per_dim.iter().filter(|r| r.is_some_and(|v| v >= threshold)).count();
    hits as f64 / per_dim.len() as f64
}

/// Linear regression from resampled acoustic features to every flattened
/// log-spectrogram dim, scored by Pearson r between prediction and target.
pub fn run_correlation(
    ds: &Dataset,
    acoustics: &AcousticFeatureSet,
    cfg: &CorrelationConfig,
) -> Result<CorrelationReport, ExperimentError> {
    if ds.is_empty() {
        return Err(ExperimentError::Config("empty dataset".into()));
    }
    if !(cfg.threshold > -1.0 && cfg.threshold <= 1.0) {
        return Err(ExperimentError::Config(format!("threshold {} outside (-1, 1]", cfg.threshold)));
    }
    let mut channels = cfg.channels.indices();
    channels.sort_unstable();
    channels.dedup();
    if let Some(&c) = channels.iter().find(|&&c| c >= ds.channel_count()) {
        return Err(ExperimentError::MissingChannel {
            channel: c,
            available: ds.channel_count(),
        });
    }

    let (train, eval): (Vec<usize>, Vec<usize>) = match cfg.evaluation {
        Evaluation::InSample => ((0..ds.len()).collect(), (0..ds.len()).collect()),
        Evaluation::HeldOut { train_frac, seed } => {
            let s = make_splits(ds, 1, train_frac, seed)?.remove(0);
            (s.train, s.test)
        }
    };

    let prepared = prepare(ds, acoustics, &channels, cfg)?;
    let (per_dim_r, ridge_lambda) = fraction_for(&prepared, cfg, &train, &eval)?;
    let control_fraction = match cfg.control_seed {
        Some(s) => {
            let control = uniform_control(acoustics, s);
            let prepared_c = prepare(ds, &control, &channels, cfg)?;
            let (r, _) = fraction_for(&prepared_c, cfg, &train, &eval)?;
            Some(fraction(&r, cfg.threshold))
        }
        None => None,
    };

    let undefined_dims: Vec<usize> = per_dim_r
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.is_none().then_some(i))
        .collect();
    if !undefined_dims.is_empty() {
        log::warn!("{} EMG dims have no defined correlation", undefined_dims.len());
    }
    Ok(CorrelationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        nfft: cfg.spectrogram.nfft,
        n_bins: cfg.spectrogram.n_bins(),
        n_frames: prepared.n_frames,
        n_dims: per_dim_r.len(),
        n_utterances: ds.len(),
        n_rows: train.len() * prepared.n_frames,
        acoustic_dim: prepared.acoustic[0].rows(),
        ridge_lambda,
        threshold: cfg.threshold,
        averaging: cfg.averaging,
        evaluation: cfg.evaluation,
        fraction_ge_threshold: fraction(&per_dim_r, cfg.threshold),
        per_dim_r,
        undefined_dims,
        control_fraction,
        channels,
    })
}
