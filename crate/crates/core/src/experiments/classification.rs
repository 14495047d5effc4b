use super::{ExperimentError, REPORT_SCHEMA_VERSION};
use crate::dataset::{ChannelSet, Dataset};
use crate::dsp::{extract_stats, STATS_PER_CHANNEL};
use crate::learn::{fit_forest, make_splits, mean, t_interval, ConfusionMatrix, ForestConfig, Split};
use crate::matrix::Matrix;
use crate::par::{self, Execution};
use crate::seed;
use crate::word::{Word, WORD_COUNT};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-utterance statistics for every channel, computed once and sliced by
/// channel afterwards. Because statistics are per channel, selecting columns
/// here equals extracting on a channel-selected dataset.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    /// `[utterance][channel * 20 + stat]`.
    pub full: Matrix,
    pub channel_count: usize,
    pub labels: Vec<usize>,
}

impl FeatureTable {
    pub fn build(ds: &Dataset, exec: Execution) -> Result<Self, ExperimentError> {
        let rows = par::map_slice(exec, &ds.utterances, extract_stats);
        let mut data = Vec::with_capacity(ds.len() * ds.channel_count() * STATS_PER_CHANNEL);
        for r in rows {
            data.extend(r?.values);
        }
        Ok(FeatureTable {
            full: Matrix::from_vec(ds.len(), ds.channel_count() * STATS_PER_CHANNEL, data),
            channel_count: ds.channel_count(),
            labels: ds.utterances.iter().map(|u| u.word.id()).collect(),
        })
    }

    /// Feature matrix for `channels` (in the given order) restricted to `rows`.
    pub fn select(&self, channels: &[usize], rows: &[usize]) -> Result<Matrix, ExperimentError> {
        if let Some(&c) = channels.iter().find(|&&c| c >= self.channel_count) {
            return Err(ExperimentError::MissingChannel {
                channel: c,
                available: self.channel_count,
            });
        }
        let mut data = Vec::with_capacity(rows.len() * channels.len() * STATS_PER_CHANNEL);
        for &r in rows {
            let row = self.full.row(r);
            for &c in channels {
                data.extend_from_slice(&row[c * STATS_PER_CHANNEL..(c + 1) * STATS_PER_CHANNEL]);
            }
        }
        Ok(Matrix::from_vec(rows.len(), channels.len() * STATS_PER_CHANNEL, data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOptions {
    pub n_splits: usize,
    pub train_frac: f64,
    pub seed: u64,
    /// Shuffle word labels within each speaker before splitting (chance-level
    /// control).
    pub permute_labels: bool,
}

impl Default for ClassificationOptions {
    fn default() -> Self {
        ClassificationOptions {
            n_splits: 10,
            train_frac: 0.8,
            seed: 2024,
            permute_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub schema_version: u32,
    pub channel_set: String,
    pub channels: Vec<usize>,
    pub n_splits: usize,
    pub train_frac: f64,
    pub seed: u64,
    pub permute_labels: bool,
    pub per_split_accuracy: Vec<f64>,
    pub mean: f64,
    pub ci95: (f64, f64),
    /// Test-set confusion summed over splits.
    pub confusion: ConfusionMatrix,
}

impl ClassificationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "channels {} ({} ch), {} splits, train_frac {}{}\n",
            self.channel_set,
            self.channels.len(),
            self.n_splits,
            self.train_frac,
            if self.permute_labels { ", labels permuted" } else { "" }
        );
        for (i, a) in self.per_split_accuracy.iter().enumerate() {
            s.push_str(&format!("  split {i:2}: {:.4}\n", a));
        }
        s.push_str(&format!(
            "mean accuracy {:.4}  95% CI [{:.4}, {:.4}]\n",
            self.mean, self.ci95.0, self.ci95.1
        ));
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,accuracy\n");
        for (i, a) in self.per_split_accuracy.iter().enumerate() {
            s.push_str(&format!("{i},{a}\n"));
        }
        s
    }
}

pub(crate) fn word_labels() -> Vec<String> {
    Word::ALL.iter().map(|w| w.text().to_string()).collect()
}

/// Shuffles word labels among each speaker's utterances, so every
/// (word, speaker) cell keeps its size.
pub fn permute_labels_within_speaker(ds: &Dataset, labels: &[usize], seed_v: u64) -> Vec<usize> {
    let mut by_speaker: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, u) in ds.utterances.iter().enumerate() {
        by_speaker.entry(u.speaker).or_default().push(i);
    }
    let mut out = labels.to_vec();
    for (s, idx) in by_speaker {
        let mut rng = seed::rng(seed::derive_path(seed_v, &[0x9E, s as u64]));
        let mut l: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        l.shuffle(&mut rng);
        for (&i, v) in idx.iter().zip(l) {
            out[i] = v;
        }
    }
    out
}

/// Fits on `split.train` and scores `split.test`, returning the test
/// confusion matrix.
pub fn evaluate_split(
    table: &FeatureTable,
    labels: &[usize],
    channels: &[usize],
    split: &Split,
    cfg: &ForestConfig,
) -> Result<ConfusionMatrix, ExperimentError> {
    let x_train = table.select(channels, &split.train)?;
    let y_train: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let forest = fit_forest(&x_train, &y_train, cfg)?;
    let x_test = table.select(channels, &split.test)?;
    let predicted = forest.predict_labels(&x_test)?;
    let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let mut m = ConfusionMatrix::new(word_labels());
    for (&t, &p) in truth.iter().zip(&predicted) {
        // forests trained on a label subset can only predict up to its max
        m.record(t, p.min(WORD_COUNT - 1));
    }
    Ok(m)
}

pub(crate) fn classify_with_table(
    ds: &Dataset,
    table: &FeatureTable,
    channel_set: &ChannelSet,
    cfg: &ForestConfig,
    opts: &ClassificationOptions,
) -> Result<ClassificationReport, ExperimentError> {
    if opts.n_splits == 0 {
        return Err(ExperimentError::Config("n_splits must be at least 1".into()));
    }
    if !ds.is_balanced() {
        return Err(ExperimentError::Unbalanced);
    }
    let mut channels = channel_set.indices();
    channels.sort_unstable();
    channels.dedup();

    let labels = if opts.permute_labels {
        permute_labels_within_speaker(ds, &table.labels, seed::derive(opts.seed, 0x5EED))
    } else {
        table.labels.clone()
    };
    // splits stratify on the labels actually used for training
    let mut relabeled = ds.clone();
    if opts.permute_labels {
        for (u, &l) in relabeled.utterances.iter_mut().zip(&labels) {
            u.word = Word::from_id(l).expect("label in range");
        }
    }
    let splits = make_splits(&relabeled, opts.n_splits, opts.train_frac, seed::derive(opts.seed, 1))?;

    let results = par::map_range(cfg.execution, splits.len(), |i| {
        let split_cfg = ForestConfig {
            seed: seed::derive(cfg.seed, i as u64),
            ..cfg.clone()
        };
        evaluate_split(table, &labels, &channels, &splits[i], &split_cfg)
    });
    let mut confusion = ConfusionMatrix::new(word_labels());
    let mut per_split_accuracy = Vec::with_capacity(results.len());
    for r in results {
        let m = r?;
        per_split_accuracy.push(m.accuracy());
        confusion = confusion.add(&m);
    }
    let m = mean(&per_split_accuracy);
    let ci = t_interval(&per_split_accuracy, 0.95);
    Ok(ClassificationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        channel_set: channel_set.label(),
        channels,
        n_splits: opts.n_splits,
        train_frac: opts.train_frac,
        seed: opts.seed,
        permute_labels: opts.permute_labels,
        per_split_accuracy,
        mean: m,
        ci95: (ci.0.min(m), ci.1.max(m)),
        confusion,
    })
}

/// Stratified split classification: statistics of the selected channels,
/// one forest per split, test accuracy per split, mean and Student-t 95% CI.
pub fn run_classification(
    ds: &Dataset,
    channel_set: &ChannelSet,
    cfg: &ForestConfig,
    opts: &ClassificationOptions,
) -> Result<ClassificationReport, ExperimentError> {
    let table = FeatureTable::build(ds, cfg.execution)?;
    classify_with_table(ds, &table, channel_set, cfg, opts)
}
