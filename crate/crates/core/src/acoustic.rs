//! Self-supervised speech feature tracks and the "ACF1" file format.
//!
//! ACF1 layout (little-endian): `"ACF1" | version u8 = 1 | rate_hz f64 |
//! frame_count u32 | dim u32 | f32 values, row-major [frame][dim]`.
//! A directory of tracks is indexed by `features.jsonl` (`{id, file}` per line).

use crate::dataset::Dataset;
use crate::matrix::Matrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

pub const ACF_MAGIC: [u8; 4] = *b"ACF1";
pub const ACF_VERSION: u8 = 1;
pub const ACF_HEADER_LEN: usize = 4 + 1 + 8 + 4 + 4;
pub const ACOUSTIC_DIM: usize = 1024;
pub const ACOUSTIC_RATE_HZ: f64 = 50.0;
pub const FEATURE_INDEX_FILE: &str = "features.jsonl";
pub const FEATURE_SIDECAR_FILE: &str = "features.json";

#[derive(Debug, thiserror::Error)]
pub enum AcousticError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?} (expected \"ACF1\")")]
    BadMagic([u8; 4]),
    #[error("unsupported ACF version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated ACF payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("ACF file has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("track '{id}' has dimension {dim}, expected 1024")]
    BadDim { id: String, dim: usize },
    #[error("feature file for '{id}' is missing: {file}")]
    MissingFile { id: String, file: String },
    #[error("feature index line {line}: {reason}")]
    Index { line: usize, reason: String },
    #[error("track shape mismatch: {0}")]
    Shape(String),
    #[error("acoustic/EMG pairing failed: {0}")]
    Pairing(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AcousticSource {
    Synthetic { seed: u64 },
    Extracted { model_layer: u32 },
    /// Uniform [0, 1) noise standing in for real features.
    Control { seed: u64 },
    External,
}

/// One feature sequence, stored row-major `[frame][dim]` at f32 precision.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFeatureTrack {
    pub utterance_id: String,
    pub rate_hz: f64,
    dim: usize,
    frames: Vec<f32>,
}

impl AcousticFeatureTrack {
    pub fn new(
        utterance_id: impl Into<String>,
        rate_hz: f64,
        dim: usize,
        frames: Vec<f32>,
    ) -> Result<Self, AcousticError> {
        if dim == 0 || !frames.len().is_multiple_of(dim) {
            return Err(AcousticError::Shape(format!(
                "{} values do not form rows of {dim}",
                frames.len()
            )));
        }
        Ok(AcousticFeatureTrack {
            utterance_id: utterance_id.into(),
            rate_hz,
            dim,
            frames,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len() / self.dim
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.frames[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f32] {
        &self.frames
    }

    /// `[dim][frame]` in f64, the layout the resampler expects.
    pub fn to_dim_major(&self) -> Matrix {
        let t = self.frame_count();
        let mut m = Matrix::zeros(self.dim, t);
        for f in 0..t {
            for (d, &v) in self.frame(f).iter().enumerate() {
                m.set(d, f, v as f64);
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFeatureSet {
    pub tracks: BTreeMap<String, AcousticFeatureTrack>,
    pub source: AcousticSource,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Accept tracks whose dimension is not 1024 (logged as a warning).
    pub allow_nonstandard_dim: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureIndexEntry {
    pub id: String,
    pub file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureSidecar {
    schema_version: u32,
    source: AcousticSource,
}

pub fn encode_acf(t: &AcousticFeatureTrack) -> Vec<u8> {
    let mut out = Vec::with_capacity(ACF_HEADER_LEN + 4 * t.frames.len());
    out.extend_from_slice(&ACF_MAGIC);
    out.push(ACF_VERSION);
    out.extend_from_slice(&t.rate_hz.to_le_bytes());
    out.extend_from_slice(&(t.frame_count() as u32).to_le_bytes());
    out.extend_from_slice(&(t.dim as u32).to_le_bytes());
    for v in &t.frames {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_acf(
    id: &str,
    bytes: &[u8],
    opts: LoadOptions,
) -> Result<AcousticFeatureTrack, AcousticError> {
    if bytes.len() < 4 {
        return Err(AcousticError::Truncated {
            expected: ACF_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != ACF_MAGIC {
        return Err(AcousticError::BadMagic(magic));
    }
    if bytes.len() < ACF_HEADER_LEN {
        return Err(AcousticError::Truncated {
            expected: ACF_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[4] != ACF_VERSION {
        return Err(AcousticError::UnsupportedVersion(bytes[4]));
    }
    let rate_hz = f64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let frames = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
    if dim != ACOUSTIC_DIM {
        if !opts.allow_nonstandard_dim || dim == 0 {
            return Err(AcousticError::BadDim { id: id.to_string(), dim });
        }
        log::warn!("track '{id}' has nonstandard dimension {dim}");
    }
    let expected = ACF_HEADER_LEN + 4 * frames * dim;
    if bytes.len() < expected {
        return Err(AcousticError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(AcousticError::TrailingBytes(bytes.len() - expected));
    }
    let values = bytes[ACF_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    AcousticFeatureTrack::new(id, rate_hz, dim, values)
}

fn io_err(path: &Path, source: std::io::Error) -> AcousticError {
    AcousticError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one `.acf` file per track plus the index; returns the index path.
pub fn save_features(set: &AcousticFeatureSet, dir: &Path) -> Result<PathBuf, AcousticError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut index = Vec::new();
    for (id, t) in &set.tracks {
        let file = format!("{id}.acf");
        let path = dir.join(&file);
        fs::write(&path, encode_acf(t)).map_err(|e| io_err(&path, e))?;
        let entry = FeatureIndexEntry { id: id.clone(), file };
        serde_json::to_writer(&mut index, &entry).expect("index entry serializes");
        index.push(b'\n');
    }
    let index_path = dir.join(FEATURE_INDEX_FILE);
    fs::write(&index_path, index).map_err(|e| io_err(&index_path, e))?;
    let sidecar = FeatureSidecar {
        schema_version: 1,
        source: set.source.clone(),
    };
    let sc_path = dir.join(FEATURE_SIDECAR_FILE);
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    fs::write(&sc_path, text).map_err(|e| io_err(&sc_path, e))?;
    Ok(index_path)
}

pub fn load_features(dir: &Path, opts: LoadOptions) -> Result<AcousticFeatureSet, AcousticError> {
    let index_path = dir.join(FEATURE_INDEX_FILE);
    let f = fs::File::open(&index_path).map_err(|e| io_err(&index_path, e))?;
    let mut tracks = BTreeMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(&index_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: FeatureIndexEntry = serde_json::from_str(&line).map_err(|e| AcousticError::Index {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let path = dir.join(&entry.file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(AcousticError::MissingFile {
                    id: entry.id,
                    file: entry.file,
                })
            }
            Err(e) => return Err(io_err(&path, e)),
        };
        let track = decode_acf(&entry.id, &bytes, opts)?;
        tracks.insert(entry.id, track);
    }
    let sc_path = dir.join(FEATURE_SIDECAR_FILE);
    let source = match fs::read(&sc_path) {
        Ok(b) => serde_json::from_slice::<FeatureSidecar>(&b)
            .map_err(|e| AcousticError::Index {
                line: 0,
                reason: format!("{}: {e}", sc_path.display()),
            })?
            .source,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => AcousticSource::External,
        Err(e) => return Err(io_err(&sc_path, e)),
    };
    Ok(AcousticFeatureSet { tracks, source })
}

impl AcousticFeatureSet {
    /// Checks that the set pairs one-to-one with `ds`: identical id sets,
    /// 50 Hz tracks, and frame counts matching each utterance's duration.
    pub fn validate_pairing(&self, ds: &Dataset) -> Result<(), AcousticError> {
        if self.tracks.len() != ds.len() {
            return Err(AcousticError::Pairing(format!(
                "{} tracks for {} utterances",
                self.tracks.len(),
                ds.len()
            )));
        }
        for u in &ds.utterances {
            let t = self
                .tracks
                .get(&u.id)
                .ok_or_else(|| AcousticError::Pairing(format!("no track for utterance '{}'", u.id)))?;
            if t.rate_hz != ACOUSTIC_RATE_HZ {
                return Err(AcousticError::Pairing(format!(
                    "track '{}' is at {} Hz, expected {ACOUSTIC_RATE_HZ}",
                    u.id, t.rate_hz
                )));
            }
            let expected = (u.duration_s() * t.rate_hz).round() as usize;
            if t.frame_count() != expected {
                return Err(AcousticError::Pairing(format!(
                    "track '{}' has {} frames, expected {expected}",
                    u.id,
                    t.frame_count()
                )));
            }
        }
        Ok(())
    }
}
