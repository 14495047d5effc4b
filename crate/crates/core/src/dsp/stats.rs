use super::DspError;
use crate::dataset::Utterance;

pub const STATS_PER_CHANNEL: usize = 20;

/// Statistic order within each channel's block of the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Max,
    Min,
    Range,
    MaxPosition,
    MinPosition,
    ArithMean,
    QuadMean,
    Std,
    Var,
    Kurtosis,
    Skewness,
    P25,
    P75,
    NPeaks,
    MeanPeakAmplitude,
    MeanAbsSlope,
    RiseTime,
    FallTime,
    Zcr,
    Mcr,
}

pub const STAT_NAMES: [&str; STATS_PER_CHANNEL] = [
    "max",
    "min",
    "range",
    "max_position",
    "min_position",
    "arith_mean",
    "quad_mean",
    "std",
    "var",
    "kurtosis",
    "skewness",
    "p25",
    "p75",
    "n_peaks",
    "mean_peak_amplitude",
    "mean_abs_slope",
    "rise_time",
    "fall_time",
    "zcr",
    "mcr",
];

/// 20 statistics per channel, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsFeatureVector {
    pub values: Vec<f64>,
    pub channel_count: usize,
}

impl StatsFeatureVector {
    pub fn get(&self, channel: usize, stat: Stat) -> f64 {
        self.values[channel * STATS_PER_CHANNEL + stat as usize]
    }

    /// Column names like `ch3_zcr`, in vector order.
    pub fn names(channel_count: usize) -> Vec<String> {
        (0..channel_count)
            .flat_map(|c| STAT_NAMES.iter().map(move |s| format!("ch{c}_{s}")))
            .collect()
    }
}

/// Statistics of every channel of `u`, computed in volts.
pub fn extract_stats(u: &Utterance) -> Result<StatsFeatureVector, DspError> {
    let fs = u.sample_rate_hz as f64;
    let mut values = Vec::with_capacity(u.channel_count() * STATS_PER_CHANNEL);
    for c in 0..u.channel_count() {
        values.extend_from_slice(&channel_stats(&u.channel_volts(c), fs)?);
    }
    Ok(StatsFeatureVector {
        values,
        channel_count: u.channel_count(),
    })
}

/// Counts sign changes of `x - level`. Samples equal to `level` carry the last
/// nonzero sign; leading ones have no sign yet and never count.
fn crossings(x: &[f64], level: f64) -> usize {
    let mut last = 0i8;
    let mut count = 0;
    for &v in x {
        let s = if v > level {
            1
        } else if v < level {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                count += 1;
            }
            last = s;
        }
    }
    count
}

/// Linear interpolation between closest ranks of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The 20 statistics of a single channel sampled at `fs` Hz.
pub fn channel_stats(x: &[f64], fs: f64) -> Result<[f64; STATS_PER_CHANNEL], DspError> {
    let n = x.len();
    if n < 3 {
        return Err(DspError::TooShort { len: n, min: 3 });
    }
    let nf = n as f64;

    let mut max_i = 0;
    let mut min_i = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[max_i] {
            max_i = i;
        }
        if v < x[min_i] {
            min_i = i;
        }
    }
    let max = x[max_i];
    let min = x[min_i];

    let constant = x.iter().all(|&v| v == x[0]);
    let mean = if constant { x[0] } else { x.iter().sum::<f64>() / nf };
    let quad_mean = (x.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();

    let (m2, m3, m4) = if constant {
        (0.0, 0.0, 0.0)
    } else {
        let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
        for &v in x {
            let d = v - mean;
            let d2 = d * d;
            s2 += d2;
            s3 += d2 * d;
            s4 += d2 * d2;
        }
        (s2 / nf, s3 / nf, s4 / nf)
    };
    let var = m2;
    let std = var.sqrt();
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p25 = quantile_sorted(&sorted, 0.25);
    let p75 = quantile_sorted(&sorted, 0.75);

    let mut n_peaks = 0usize;
    let mut peak_sum = 0.0;
    for i in 1..n - 1 {
        if x[i - 1] < x[i] && x[i] > x[i + 1] && x[i] > mean {
            n_peaks += 1;
            peak_sum += x[i];
        }
    }
    let mean_peak_amplitude = if n_peaks > 0 { peak_sum / n_peaks as f64 } else { 0.0 };

    let steps = (n - 1) as f64;
    let mut abs_slope = 0.0;
    let mut rises = 0usize;
    let mut falls = 0usize;
    for w in x.windows(2) {
        let d = w[1] - w[0];
        abs_slope += d.abs();
        if d > 0.0 {
            rises += 1;
        } else if d < 0.0 {
            falls += 1;
        }
    }

    let duration_s = nf / fs;
    let zcr = crossings(x, 0.0) as f64 / duration_s;
    let mcr = if constant { 0.0 } else { crossings(x, mean) as f64 / duration_s };

    Ok([
        max,
        min,
        max - min,
        max_i as f64 / steps,
        min_i as f64 / steps,
        mean,
        quad_mean,
        std,
        var,
        kurtosis,
        skewness,
        p25,
        p75,
        n_peaks as f64,
        mean_peak_amplitude,
        abs_slope / steps,
        rises as f64 / steps,
        falls as f64 / steps,
        zcr,
        mcr,
    ])
}
