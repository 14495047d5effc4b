//! Corpus schema, the "EMG1" utterance file format and the JSON-lines manifest.
//!
//! On disk a dataset directory holds one `.emg` file per utterance, a
//! `manifest.jsonl` with one `{id, speaker, word, file}` object per line, and a
//! small `dataset.json` sidecar carrying the channel role map and provenance.
//!
//! EMG1 layout (little-endian):
//!
//! ```text
//! "EMG1" | version u8 = 1 | channel_count u16 | sample_rate_hz u32 |
//! sample_count u64 | volts_per_lsb f64 | i16 samples, sample-major
//! ```

use crate::word::Word;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

pub const EMG_MAGIC: [u8; 4] = *b"EMG1";
pub const EMG_VERSION: u8 = 1;
pub const EMG_HEADER_LEN: usize = 4 + 1 + 2 + 4 + 8 + 8;

pub const ADC_MIN: i16 = -16384;
pub const ADC_MAX: i16 = 16383;
/// 100 mVpp input range over a 15-bit converter.
pub const DEFAULT_VOLTS_PER_LSB: f64 = 0.1 / 32768.0;
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 1000;
/// 1.5 s at 1 kSps.
pub const UTTERANCE_SAMPLES: usize = 1500;

pub const FULL_CHANNELS: usize = 13;
pub const NECK_CHANNELS: [usize; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
pub const FACE_CHANNELS: [usize; 3] = [10, 11, 12];

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SIDECAR_FILE: &str = "dataset.json";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?} (expected \"EMG1\")")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported EMG file version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated EMG payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("EMG file has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("manifest/file mismatch for '{id}': {reason}")]
    ManifestMismatch { id: String, reason: String },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("invalid utterance '{id}': {reason}")]
    InvalidUtterance { id: String, reason: String },
    #[error("channel index {index} out of range for {count} channels")]
    ChannelOutOfRange { index: usize, count: usize },
    #[error("duplicate channel index {0}")]
    DuplicateChannel(usize),
    #[error("dataset is inconsistent: {0}")]
    Inconsistent(String),
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    Neck,
    Face,
}

/// Role map for a corpus of `count` channels recorded with the standard montage:
/// the first ten are neck electrodes and any remaining ones are face electrodes.
pub fn default_roles(count: usize) -> Vec<ChannelRole> {
    (0..count)
        .map(|c| if c < NECK_CHANNELS.len() { ChannelRole::Neck } else { ChannelRole::Face })
        .collect()
}

/// How an utterance window was cut from a longer prompt recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorPolicy {
    /// Centered on the midpoint of the word sub-phase.
    #[default]
    Center,
    /// Centered on the peak of a short RMS envelope inside the word sub-phase.
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Synthetic { seed: u64 },
    Recorded { anchor: AnchorPolicy },
    Ingested,
}

/// One labeled multichannel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: u8,
    pub word: Word,
    pub sample_rate_hz: u32,
    pub volts_per_lsb: f64,
    samples: Vec<Vec<i16>>,
}

impl Utterance {
    /// Builds an utterance from per-channel ADC codes.
    pub fn new(
        id: impl Into<String>,
        speaker: u8,
        word: Word,
        sample_rate_hz: u32,
        volts_per_lsb: f64,
        samples: Vec<Vec<i16>>,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        let bad = |reason: String| DatasetError::InvalidUtterance {
            id: id.clone(),
            reason,
        };
        if samples.is_empty() {
            return Err(bad("no channels".into()));
        }
        if samples.len() > u16::MAX as usize {
            return Err(bad(format!("{} channels exceeds u16", samples.len())));
        }
        let n = samples[0].len();
        if samples.iter().any(|c| c.len() != n) {
            return Err(bad("channels differ in length".into()));
        }
        if let Some(code) = samples.iter().flatten().find(|&&v| !(ADC_MIN..=ADC_MAX).contains(&v)) {
            return Err(bad(format!("ADC code {code} outside 15-bit range")));
        }
        if sample_rate_hz == 0 {
            return Err(bad("sample rate must be positive".into()));
        }
        if !(volts_per_lsb.is_finite() && volts_per_lsb > 0.0) {
            return Err(bad(format!("volts_per_lsb {volts_per_lsb} must be positive")));
        }
        Ok(Utterance {
            id,
            speaker,
            word,
            sample_rate_hz,
            volts_per_lsb,
            samples,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.samples.len()
    }

    pub fn duration_samples(&self) -> usize {
        self.samples[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_samples() as f64 / self.sample_rate_hz as f64
    }

    pub fn channel(&self, c: usize) -> &[i16] {
        &self.samples[c]
    }

    pub fn channels(&self) -> &[Vec<i16>] {
        &self.samples
    }

    /// Channel `c` converted to volts.
    pub fn channel_volts(&self, c: usize) -> Vec<f64> {
        self.samples[c]
            .iter()
            .map(|&v| v as f64 * self.volts_per_lsb)
            .collect()
    }

    /// Keeps only the listed channels, in the given order. Indices are
    /// assumed validated by the caller.
    fn with_channels(&self, channels: &[usize]) -> Utterance {
        Utterance {
            samples: channels.iter().map(|&c| self.samples[c].clone()).collect(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Utterance {
        Utterance {
            id: self.id.clone(),
            speaker: self.speaker,
            word: self.word,
            sample_rate_hz: self.sample_rate_hz,
            volts_per_lsb: self.volts_per_lsb,
            samples: Vec::new(),
        }
    }
}

/// Channel selections used throughout the experiments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSet {
    Full13,
    Neck10,
    Face3,
    Custom(Vec<usize>),
}

impl ChannelSet {
    pub fn indices(&self) -> Vec<usize> {
        match self {
            ChannelSet::Full13 => (0..FULL_CHANNELS).collect(),
            ChannelSet::Neck10 => NECK_CHANNELS.to_vec(),
            ChannelSet::Face3 => FACE_CHANNELS.to_vec(),
            ChannelSet::Custom(v) => v.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ChannelSet::Full13 => "full13".into(),
            ChannelSet::Neck10 => "neck10".into(),
            ChannelSet::Face3 => "face3".into(),
            ChannelSet::Custom(v) => {
                let parts: Vec<String> = v.iter().map(|c| c.to_string()).collect();
                format!("custom:{}", parts.join(","))
            }
        }
    }
}

impl std::str::FromStr for ChannelSet {
    type Err = String;

    /// Accepts `full13`, `neck10`, `face3` or a comma-separated index list.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full13" | "full" | "all" => Ok(ChannelSet::Full13),
            "neck10" | "neck" => Ok(ChannelSet::Neck10),
            "face3" | "face" => Ok(ChannelSet::Face3),
            other => {
                let list = other.strip_prefix("custom:").unwrap_or(other);
                let idx: Result<Vec<usize>, _> =
                    list.split(',').map(|p| p.trim().parse::<usize>()).collect();
                match idx {
                    Ok(v) if !v.is_empty() => Ok(ChannelSet::Custom(v)),
                    _ => Err(format!(
                        "unknown channel set '{s}' (expected full13, neck10, face3 or a list like 0,4,5)"
                    )),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub utterances: Vec<Utterance>,
    pub channel_roles: Vec<ChannelRole>,
    pub provenance: Provenance,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub speaker: u8,
    pub word: Word,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchorPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    schema_version: u32,
    channel_roles: Vec<ChannelRole>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        utterances: Vec<Utterance>,
        channel_roles: Vec<ChannelRole>,
        provenance: Provenance,
    ) -> Result<Self, DatasetError> {
        let ds = Dataset {
            utterances,
            channel_roles,
            provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn empty(channel_count: usize, provenance: Provenance) -> Self {
        Dataset {
            utterances: Vec::new(),
            channel_roles: default_roles(channel_count),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channel_roles.len()
    }

    pub fn speakers(&self) -> Vec<u8> {
        let mut s: Vec<u8> = self.utterances.iter().map(|u| u.speaker).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Utterance counts per (word, speaker) cell.
    pub fn cell_counts(&self) -> BTreeMap<(Word, u8), usize> {
        let mut m = BTreeMap::new();
        for u in &self.utterances {
            *m.entry((u.word, u.speaker)).or_insert(0) += 1;
        }
        m
    }

    /// Every word appears for every speaker, and all cells hold the same count.
    pub fn is_balanced(&self) -> bool {
        let cells = self.cell_counts();
        let speakers = self.speakers();
        if cells.len() != Word::ALL.len() * speakers.len() {
            return false;
        }
        let mut counts = cells.values();
        match counts.next() {
            Some(first) => counts.all(|c| c == first),
            None => true,
        }
    }

    /// Index of the utterance with `id`.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.utterances.iter().position(|u| u.id == id)
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let mut ids = HashSet::new();
        for u in &self.utterances {
            if !ids.insert(u.id.as_str()) {
                return Err(DatasetError::Inconsistent(format!("duplicate id '{}'", u.id)));
            }
            if u.channel_count() != self.channel_roles.len() {
                return Err(DatasetError::Inconsistent(format!(
                    "utterance '{}' has {} channels, role map has {}",
                    u.id,
                    u.channel_count(),
                    self.channel_roles.len()
                )));
            }
        }
        if let Some(first) = self.utterances.first() {
            if self.utterances.iter().any(|u| u.sample_rate_hz != first.sample_rate_hz) {
                return Err(DatasetError::Inconsistent("mixed sample rates".into()));
            }
        }
        Ok(())
    }

    /// New dataset holding only `channels`, in the order given.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Dataset, DatasetError> {
        let count = self.channel_count();
        let mut seen = HashSet::new();
        for &c in channels {
            if c >= count {
                return Err(DatasetError::ChannelOutOfRange { index: c, count });
            }
            if !seen.insert(c) {
                return Err(DatasetError::DuplicateChannel(c));
            }
        }
        if channels.is_empty() {
            return Err(DatasetError::Inconsistent("empty channel selection".into()));
        }
        Ok(Dataset {
            utterances: self.utterances.iter().map(|u| u.with_channels(channels)).collect(),
            channel_roles: channels.iter().map(|&c| self.channel_roles[c]).collect(),
            provenance: self.provenance.clone(),
        })
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let anchor = match self.provenance {
            Provenance::Recorded { anchor } => Some(anchor),
            _ => None,
        };
        self.utterances
            .iter()
            .map(|u| ManifestEntry {
                id: u.id.clone(),
                speaker: u.speaker,
                word: u.word,
                file: format!("{}.emg", u.id),
                anchor,
            })
            .collect()
    }
}

/// Serializes one utterance as an EMG1 byte image.
pub fn encode_emg(u: &Utterance) -> Vec<u8> {
    let cc = u.channel_count();
    let n = u.duration_samples();
    let mut out = Vec::with_capacity(EMG_HEADER_LEN + 2 * cc * n);
    out.extend_from_slice(&EMG_MAGIC);
    out.push(EMG_VERSION);
    out.extend_from_slice(&(cc as u16).to_le_bytes());
    out.extend_from_slice(&u.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&u.volts_per_lsb.to_le_bytes());
    for t in 0..n {
        for c in 0..cc {
            out.extend_from_slice(&u.samples[c][t].to_le_bytes());
        }
    }
    out
}

/// The content of an EMG1 file; labels live in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct EmgRecord {
    pub sample_rate_hz: u32,
    pub volts_per_lsb: f64,
    /// `[channel][time]`
    pub samples: Vec<Vec<i16>>,
}

pub fn decode_emg(bytes: &[u8]) -> Result<EmgRecord, DatasetError> {
    if bytes.len() < 4 {
        return Err(DatasetError::Truncated {
            expected: EMG_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != EMG_MAGIC {
        return Err(DatasetError::BadMagic { found: magic });
    }
    if bytes.len() < EMG_HEADER_LEN {
        return Err(DatasetError::Truncated {
            expected: EMG_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let version = bytes[4];
    if version != EMG_VERSION {
        return Err(DatasetError::UnsupportedVersion(version));
    }
    let cc = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
    let sample_rate_hz = u32::from_le_bytes(bytes[7..11].try_into().unwrap());
    let n = u64::from_le_bytes(bytes[11..19].try_into().unwrap());
    let volts_per_lsb = f64::from_le_bytes(bytes[19..27].try_into().unwrap());

    let expected = (n as u128) * (cc as u128) * 2 + EMG_HEADER_LEN as u128;
    if (bytes.len() as u128) < expected {
        return Err(DatasetError::Truncated {
            expected: expected.min(usize::MAX as u128) as usize,
            actual: bytes.len(),
        });
    }
    let expected = expected as usize;
    if bytes.len() > expected {
        return Err(DatasetError::TrailingBytes(bytes.len() - expected));
    }
    let n = n as usize;
    let mut samples = vec![Vec::with_capacity(n); cc];
    for (k, chunk) in bytes[EMG_HEADER_LEN..].chunks_exact(2).enumerate() {
        samples[k % cc].push(i16::from_le_bytes([chunk[0], chunk[1]]));
    }
    Ok(EmgRecord {
        sample_rate_hz,
        volts_per_lsb,
        samples,
    })
}

/// Writes the dataset into `dir` and returns the manifest path.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf, DatasetError> {
    fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    let entries = ds.manifest();
    for (u, e) in ds.utterances.iter().zip(&entries) {
        let path = dir.join(&e.file);
        fs::write(&path, encode_emg(u)).map_err(|err| DatasetError::io(&path, err))?;
    }

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut buf = Vec::new();
    for e in &entries {
        serde_json::to_writer(&mut buf, e).expect("manifest entry serializes");
        buf.push(b'\n');
    }
    fs::write(&manifest_path, buf).map_err(|e| DatasetError::io(&manifest_path, e))?;

    let sidecar = Sidecar {
        schema_version: 1,
        channel_roles: ds.channel_roles.clone(),
        provenance: ds.provenance.clone(),
    };
    let sidecar_path = dir.join(SIDECAR_FILE);
    let mut f = fs::File::create(&sidecar_path).map_err(|e| DatasetError::io(&sidecar_path, e))?;
    serde_json::to_writer_pretty(&mut f, &sidecar).expect("sidecar serializes");
    f.write_all(b"\n").map_err(|e| DatasetError::io(&sidecar_path, e))?;
    Ok(manifest_path)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    let f = fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(&line).map_err(|err| DatasetError::Manifest {
            line: i + 1,
            reason: err.to_string(),
        })?;
        entries.push(e);
    }
    Ok(entries)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let entries = read_manifest(&dir.join(MANIFEST_FILE))?;

    let sidecar_path = dir.join(SIDECAR_FILE);
    let sidecar: Option<Sidecar> = match fs::read(&sidecar_path) {
        Ok(bytes) => Some(serde_json::from_slice(&bytes).map_err(|e| {
            DatasetError::Inconsistent(format!("{}: {e}", sidecar_path.display()))
        })?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(DatasetError::io(&sidecar_path, e)),
    };

    let mut utterances = Vec::with_capacity(entries.len());
    for e in &entries {
        let path = dir.join(&e.file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(err) if err.kind() == std::io::ErrorKind::NotFound => {
                return Err(DatasetError::ManifestMismatch {
                    id: e.id.clone(),
                    reason: format!("file {} not found", e.file),
                })
            }
            Err(err) => return Err(DatasetError::io(&path, err)),
        };
        let rec = decode_emg(&bytes)?;
        if let Some(sc) = &sidecar {
            if rec.samples.len() != sc.channel_roles.len() {
                return Err(DatasetError::ManifestMismatch {
                    id: e.id.clone(),
                    reason: format!(
                        "file has {} channels, dataset declares {}",
                        rec.samples.len(),
                        sc.channel_roles.len()
                    ),
                });
            }
        }
        let u = Utterance::new(
            e.id.clone(),
            e.speaker,
            e.word,
            rec.sample_rate_hz,
            rec.volts_per_lsb,
            rec.samples,
        )
        .map_err(|err| DatasetError::ManifestMismatch {
            id: e.id.clone(),
            reason: err.to_string(),
        })?;
        utterances.push(u);
    }

    let (roles, provenance) = match sidecar {
        Some(sc) => (sc.channel_roles, sc.provenance),
        None => {
            let cc = utterances.first().map_or(0, |u| u.channel_count());
            (default_roles(cc), Provenance::Ingested)
        }
    };
    Dataset::new(utterances, roles, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, word: Word, speaker: u8, samples: Vec<Vec<i16>>) -> Utterance {
        Utterance::new(id, speaker, word, 1000, DEFAULT_VOLTS_PER_LSB, samples).unwrap()
    }

    fn small_dataset() -> Dataset {
        let mut us = Vec::new();
        for (i, w) in [Word::Heed, Word::Aba].iter().enumerate() {
            let samples = (0..13)
                .map(|c| (0..5).map(|t| (c * 100 + t + i * 7) as i16 - 600).collect())
                .collect();
            us.push(utt(&format!("u{i}"), *w, 1 + i as u8, samples));
        }
        Dataset::new(us, default_roles(13), Provenance::Synthetic { seed: 3 }).unwrap()
    }

    #[test]
    fn tiny_file_layout() {
        let u = Utterance::new("x", 1, Word::Heed, 1000, 3.0517578125e-6, vec![vec![1, -1, 0]]).unwrap();
        let bytes = encode_emg(&u);
        assert_eq!(bytes.len(), 33);
        assert_eq!(&bytes[0..4], b"EMG1");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..7], &[1, 0]);
        assert_eq!(&bytes[7..11], &1000u32.to_le_bytes());
        assert_eq!(&bytes[11..19], &3u64.to_le_bytes());
        assert_eq!(&bytes[27..33], &[0x01, 0x00, 0xFF, 0xFF, 0x00, 0x00]);
        let rec = decode_emg(&bytes).unwrap();
        assert_eq!(rec.samples, vec![vec![1, -1, 0]]);
        assert_eq!(rec.volts_per_lsb, 3.0517578125e-6);
    }

    #[test]
    fn interleaving_is_sample_major() {
        let u = utt("x", Word::Had, 1, vec![vec![1, 2], vec![10, 20]]);
        let bytes = encode_emg(&u);
        let words: Vec<i16> = bytes[EMG_HEADER_LEN..]
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect();
        assert_eq!(words, vec![1, 10, 2, 20]);
    }

    #[test]
    fn decode_errors_are_distinct() {
        let u = utt("x", Word::Had, 1, vec![vec![1, 2, 3]]);
        let mut bytes = encode_emg(&u);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_emg(&bad), Err(DatasetError::BadMagic { found }) if &found == b"XMG1"));

        let short = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_emg(short), Err(DatasetError::Truncated { .. })));
        assert!(matches!(decode_emg(&bytes[..10]), Err(DatasetError::Truncated { .. })));

        bytes.push(0);
        assert!(matches!(decode_emg(&bytes), Err(DatasetError::TrailingBytes(1))));

        let mut v = encode_emg(&u);
        v[4] = 2;
        assert!(matches!(decode_emg(&v), Err(DatasetError::UnsupportedVersion(2))));
    }

    #[test]
    fn rejects_out_of_range_codes() {
        let err = Utterance::new("x", 1, Word::Had, 1000, 1e-6, vec![vec![16384]]);
        assert!(err.is_err());
        let err = Utterance::new("x", 1, Word::Had, 1000, 1e-6, vec![vec![-16385]]);
        assert!(err.is_err());
        assert!(Utterance::new("x", 1, Word::Had, 1000, 1e-6, vec![vec![-16384, 16383]]).is_ok());
    }

    #[test]
    fn save_load_round_trip() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_dataset(&ds, dir.path()).unwrap();
        assert!(manifest.ends_with(MANIFEST_FILE));
        let text = fs::read_to_string(&manifest).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"id":"u0","speaker":1,"word":"heed","file":"u0.emg"}"#
        );
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn load_reports_missing_file_and_bad_magic() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();

        let p = dir.path().join("u1.emg");
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'X';
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DatasetError::BadMagic { .. })));

        fs::remove_file(&p).unwrap();
        match load_dataset(dir.path()) {
            Err(DatasetError::ManifestMismatch { id, .. }) => assert_eq!(id, "u1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_rejects_channel_count_mismatch() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let narrow = utt("u0", Word::Heed, 1, vec![vec![0; 5]; 2]);
        fs::write(dir.path().join("u0.emg"), encode_emg(&narrow)).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DatasetError::ManifestMismatch { .. })));
    }

    #[test]
    fn select_channels_behaviour() {
        let ds = small_dataset();
        let neck = ds.select_channels(&NECK_CHANNELS).unwrap();
        assert_eq!(neck.channel_count(), 10);
        assert!(neck.channel_roles.iter().all(|r| *r == ChannelRole::Neck));

        let all: Vec<usize> = (0..13).collect();
        assert_eq!(ds.select_channels(&all).unwrap(), ds);

        let face = ds.select_channels(&FACE_CHANNELS).unwrap();
        assert_eq!(face.channel_count(), 3);
        assert!(face.channel_roles.iter().all(|r| *r == ChannelRole::Face));
        assert_eq!(face.utterances[0].channel(0), ds.utterances[0].channel(10));

        let swapped = ds.select_channels(&[12, 0]).unwrap();
        assert_eq!(swapped.utterances[1].channel(0), ds.utterances[1].channel(12));
        assert_eq!(swapped.channel_roles, vec![ChannelRole::Face, ChannelRole::Neck]);

        assert!(matches!(
            ds.select_channels(&[13]),
            Err(DatasetError::ChannelOutOfRange { index: 13, count: 13 })
        ));
        assert!(matches!(ds.select_channels(&[1, 1]), Err(DatasetError::DuplicateChannel(1))));
    }

    #[test]
    fn channel_set_parsing() {
        assert_eq!("neck10".parse::<ChannelSet>().unwrap(), ChannelSet::Neck10);
        assert_eq!("0,4, 5".parse::<ChannelSet>().unwrap(), ChannelSet::Custom(vec![0, 4, 5]));
        assert!("bogus".parse::<ChannelSet>().is_err());
        assert_eq!(ChannelSet::Face3.indices(), vec![10, 11, 12]);
    }

    #[test]
    fn balance_check() {
        let ds = small_dataset();
        assert!(!ds.is_balanced());
        assert_eq!(ds.speakers(), vec![1, 2]);
    }
}
