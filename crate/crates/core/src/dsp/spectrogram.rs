use super::DspError;
use crate::dataset::Utterance;
use crate::matrix::Matrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub nperseg: usize,
    pub noverlap: usize,
    pub nfft: usize,
    pub window: Window,
    pub log_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        SpectrogramConfig {
            nperseg: 100,
            noverlap: 50,
            nfft: 128,
            window: Window::Hann,
            log_floor: 1e-12,
        }
    }
}

impl SpectrogramConfig {
    /// The 129-bin variant used for the speech correlation study.
    pub fn correlation() -> Self {
        SpectrogramConfig {
            nfft: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.nperseg == 0 || self.noverlap >= self.nperseg || self.nperseg > self.nfft {
            return Err(DspError::BadConfig(format!(
                "need noverlap < nperseg <= nfft, got {} / {} / {}",
                self.noverlap, self.nperseg, self.nfft
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(DspError::BadConfig("log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.nperseg - self.noverlap
    }

    pub fn n_bins(&self) -> usize {
        self.nfft / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.nperseg {
            0
        } else {
            (n_samples - self.nperseg) / self.hop() + 1
        }
    }
}

/// One-sided power spectral density per channel, bin and frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Flat `[channel][bin][frame]`.
    power: Vec<f64>,
    pub channel_count: usize,
    pub n_bins: usize,
    pub n_frames: usize,
    pub bin_hz: f64,
    pub frame_hop_s: f64,
    pub log_floor: f64,
}

impl Spectrogram {
    #[inline]
    pub fn power(&self, channel: usize, bin: usize, frame: usize) -> f64 {
        self.power[(channel * self.n_bins + bin) * self.n_frames + frame]
    }

    /// Power of one channel and bin over all frames.
    pub fn bin_track(&self, channel: usize, bin: usize) -> &[f64] {
        let start = (channel * self.n_bins + bin) * self.n_frames;
        &self.power[start..start + self.n_frames]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.power
    }

    /// Bin index with the most power in `frame` of `channel` (lowest on ties).
    pub fn peak_bin(&self, channel: usize, frame: usize) -> usize {
        let mut best = 0;
        for b in 1..self.n_bins {
            if self.power(channel, b, frame) > self.power(channel, best, frame) {
                best = b;
            }
        }
        best
    }
}

/// Spectrogram of an utterance, computed on raw ADC codes.
pub fn spectrogram(u: &Utterance, cfg: &SpectrogramConfig) -> Result<Spectrogram, DspError> {
    let signals: Vec<Vec<f64>> = u
        .channels()
        .iter()
        .map(|c| c.iter().map(|&v| v as f64).collect())
        .collect();
    spectrogram_of_signals(&signals, u.sample_rate_hz as f64, cfg)
}

pub fn spectrogram_of_signals(
    signals: &[Vec<f64>],
    fs: f64,
    cfg: &SpectrogramConfig,
) -> Result<Spectrogram, DspError> {
    cfg.validate()?;
    let n = signals.first().map_or(0, |s| s.len());
    if signals.iter().any(|s| s.len() != n) {
        return Err(DspError::Shape("channels differ in length".into()));
    }
    if n < cfg.nperseg {
        return Err(DspError::TooShort {
            len: n,
            min: cfg.nperseg,
        });
    }

    let window = cfg.window.coefficients(cfg.nperseg);
    let win_energy: f64 = window.iter().map(|w| w * w).sum();
    let scale = 1.0 / (fs * win_energy);
    let n_bins = cfg.n_bins();
    let n_frames = cfg.n_frames(n);
    let hop = cfg.hop();
    let nyquist_bin = if cfg.nfft.is_multiple_of(2) { Some(cfg.nfft / 2) } else { None };

    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.nfft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; signals.len() * n_bins * n_frames];

    for (c, x) in signals.iter().enumerate() {
        for f in 0..n_frames {
            let seg = &x[f * hop..f * hop + cfg.nperseg];
            for (slot, (v, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
                *slot = Complex::new(v * w, 0.0);
            }
            for slot in buf[cfg.nperseg..].iter_mut() {
                *slot = Complex::new(0.0, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for b in 0..n_bins {
                let mut p = buf[b].norm_sqr() * scale;
                if b != 0 && Some(b) != nyquist_bin {
                    p *= 2.0;
                }
                power[(c * n_bins + b) * n_frames + f] = p;
            }
        }
    }

    Ok(Spectrogram {
        power,
        channel_count: signals.len(),
        n_bins,
        n_frames,
        bin_hz: fs / cfg.nfft as f64,
        frame_hop_s: hop as f64 / fs,
        log_floor: cfg.log_floor,
    })
}

/// Reshapes to `[channel * n_bins + bin][frame]`, optionally as
/// `log10(power + log_floor)`.
pub fn flatten_spectrogram(s: &Spectrogram, log: bool) -> Matrix {
    let data = if log {
        s.power.iter().map(|p| (p + s.log_floor).log10()).collect()
    } else {
        s.power.clone()
    };
    Matrix::from_vec(s.channel_count * s.n_bins, s.n_frames, data)
}

/// Inverse of [`flatten_spectrogram`] without the log transform.
pub fn unflatten_spectrogram(
    m: &Matrix,
    channel_count: usize,
    template: &Spectrogram,
) -> Result<Spectrogram, DspError> {
    if channel_count == 0 || !m.rows().is_multiple_of(channel_count) {
        return Err(DspError::Shape(format!(
            "{} rows do not split into {channel_count} channels",
            m.rows()
        )));
    }
    Ok(Spectrogram {
        power: m.as_slice().to_vec(),
        channel_count,
        n_bins: m.rows() / channel_count,
        n_frames: m.cols(),
        bin_hz: template.bin_hz,
        frame_hop_s: template.frame_hop_s,
        log_floor: template.log_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn frame_count_for_utterance() {
        let cfg = SpectrogramConfig::default();
        assert_eq!(cfg.n_frames(1500), 29);
        assert_eq!(cfg.n_bins(), 65);
        assert_eq!(SpectrogramConfig::correlation().n_bins(), 129);
        let s = spectrogram_of_signals(&[vec![0.0; 1500]], 1000.0, &cfg).unwrap();
        assert_eq!(s.n_frames, 29);
        assert!(s.as_slice().iter().all(|&p| p == 0.0));
        assert_eq!(s.frame_hop_s, 0.05);
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let cfg = SpectrogramConfig::correlation();
        let x: Vec<f64> = (0..1500).map(|i| (2.0 * PI * 125.0 * i as f64 / 1000.0).sin()).collect();
        let s = spectrogram_of_signals(&[x], 1000.0, &cfg).unwrap();
        assert_eq!(s.bin_hz, 3.90625);
        for f in 0..s.n_frames {
            assert_eq!(s.peak_bin(0, f), 32);
        }
    }

    #[test]
    fn rejects_bad_config_and_short_input() {
        let bad = SpectrogramConfig { noverlap: 100, ..Default::default() };
        assert!(matches!(bad.validate(), Err(DspError::BadConfig(_))));
        let bad = SpectrogramConfig { nfft: 64, ..Default::default() };
        assert!(bad.validate().is_err());
        let cfg = SpectrogramConfig::default();
        assert!(matches!(
            spectrogram_of_signals(&[vec![0.0; 99]], 1000.0, &cfg),
            Err(DspError::TooShort { len: 99, min: 100 })
        ));
    }

    #[test]
    fn flatten_layout_and_round_trip() {
        let cfg = SpectrogramConfig::correlation();
        let signals: Vec<Vec<f64>> = (0..10)
            .map(|c| (0..1500).map(|i| ((i * (c + 1)) % 17) as f64).collect())
            .collect();
        let s = spectrogram_of_signals(&signals, 1000.0, &cfg).unwrap();
        let flat = flatten_spectrogram(&s, false);
        assert_eq!(flat.shape(), (1290, 29));
        assert_eq!(flat.get(3 * 129 + 7, 5), s.power(3, 7, 5));
        let back = unflatten_spectrogram(&flat, 10, &s).unwrap();
        assert_eq!(back, s);

        let logged = flatten_spectrogram(&s, true);
        assert_eq!(logged.get(0, 0), (s.power(0, 0, 0) + 1e-12).log10());

        let one = spectrogram_of_signals(&signals[..1], 1000.0, &cfg).unwrap();
        assert_eq!(flatten_spectrogram(&one, false).as_slice(), one.as_slice());
    }

    proptest! {
        #[test]
        fn parseval_with_rectangular_window(x in prop::collection::vec(-100.0f64..100.0, 100..400), nfft_pow in 7u32..9) {
            let cfg = SpectrogramConfig { window: Window::Rectangular, nfft: 1 << nfft_pow, ..Default::default() };
            let fs = 1000.0;
            let s = spectrogram_of_signals(&[x.clone()], fs, &cfg).unwrap();
            let w_energy = cfg.nperseg as f64;
            for f in 0..s.n_frames {
                let seg = &x[f * cfg.hop()..f * cfg.hop() + cfg.nperseg];
                let energy: f64 = seg.iter().map(|v| v * v).sum();
                let spectral: f64 = (0..s.n_bins).map(|b| s.power(0, b, f)).sum::<f64>() * s.bin_hz * w_energy;
                prop_assert!((spectral - energy).abs() <= 1e-6 * energy.max(1e-300));
            }
        }

        #[test]
        fn power_is_nonnegative(x in prop::collection::vec(-1e4f64..1e4, 100..300)) {
            let s = spectrogram_of_signals(&[x], 1000.0, &SpectrogramConfig::default()).unwrap();
            prop_assert!(s.as_slice().iter().all(|&p| p >= 0.0));
        }
    }
}
