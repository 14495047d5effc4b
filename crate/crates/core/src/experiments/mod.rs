//! Scripted, seeded studies: split classification, electrode ablation,
//! one-shot cross-speaker confusion, and the speech-feature ↔ EMG spectrogram
//! correlation. Every report is a pure function of its inputs and seed.

mod ablation;
mod classification;
mod correlation;
mod one_shot;

pub use ablation::{run_ablation, AblationPolicy, AblationReport, CENTER_OUT_ORDER};
pub use classification::{
    evaluate_split, permute_labels_within_speaker, run_classification, ClassificationOptions,
    ClassificationReport, FeatureTable,
};
pub use correlation::{
    run_correlation, uniform_control, Averaging, CorrelationConfig, CorrelationReport, Evaluation,
};
pub use one_shot::{run_one_shot_confusion, DirectionSummary, OneShotReport};

use crate::acoustic::AcousticError;
use crate::dataset::DatasetError;
use crate::dsp::DspError;
use crate::learn::LearnError;

/// Version stamped on every JSON report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Acoustic(#[from] AcousticError),
    #[error("dataset is not balanced across (word, speaker) cells")]
    Unbalanced,
    #[error("expected exactly two speakers, found {0:?}")]
    Speakers(Vec<u8>),
    #[error("channel {channel} not present in a {available}-channel dataset")]
    MissingChannel { channel: usize, available: usize },
    #[error("utterance '{id}': {reason}")]
    FrameMismatch { id: String, reason: String },
    #[error("invalid experiment config: {0}")]
    Config(String),
}
