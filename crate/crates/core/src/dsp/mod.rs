//! EMG representations: per-channel time-domain statistics, STFT power
//! spectrograms, and the temporal resampling used to align feature tracks.

mod interp;
mod spectrogram;
mod stats;

pub use interp::interp_to_length;
pub use spectrogram::{
    flatten_spectrogram, spectrogram, spectrogram_of_signals, unflatten_spectrogram, Spectrogram,
    SpectrogramConfig, Window,
};
pub use stats::{
    channel_stats, extract_stats, Stat, StatsFeatureVector, STATS_PER_CHANNEL, STAT_NAMES,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("channel has {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("invalid spectrogram config: {0}")]
    BadConfig(String),
    #[error("interpolation needs at least 2 source frames, got {0}")]
    InterpSource(usize),
    #[error("interpolation target length must be positive")]
    InterpTarget,
    #[error("shape mismatch: {0}")]
    Shape(String),
}
