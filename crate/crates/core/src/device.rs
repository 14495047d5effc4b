//! Wire codec for the acquisition module's packets, a simulated device, and
//! receiver-side reassembly.
//!
//! Layout (little-endian):
//!
//! ```text
//! off  size  field
//!   0     2  magic 0xA55A
//!   2     1  version (1)
//!   3     1  channel_count
//!   4     1  samples_per_channel
//!   5     4  sequence (wrapping)
//!   9     8  timestamp_us
//!  17  2·n  payload words, frame-major: code + 16384 in bits 0..14;
//!            bit 15 of the first word = trigger line at frame start
//! end     2  CRC-16/CCITT-FALSE over all preceding bytes
//! ```

use crate::seed;
use crc::{Crc, CRC_16_IBM_3740};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const PACKET_MAGIC: u16 = 0xA55A;
pub const PACKET_VERSION: u8 = 1;
pub const PACKET_HEADER_LEN: usize = 2 + 1 + 1 + 1 + 4 + 8;
pub const PACKET_CRC_LEN: usize = 2;
pub const DEFAULT_SAMPLES_PER_CHANNEL: u8 = 20;
pub const CODE_OFFSET: i32 = 16384;
const TRIGGER_BIT: u16 = 0x8000;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
/// The `crc` catalog lists it under its registered name IBM-3740.
const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CCITT_FALSE.checksum(bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PacketError {
    #[error("buffer of {len} bytes is shorter than the {min}-byte minimum")]
    Short { len: usize, min: usize },
    #[error("bad magic 0x{0:04X}")]
    BadMagic(u16),
    #[error("CRC mismatch: computed 0x{computed:04X}, stored 0x{stored:04X}")]
    BadCrc { computed: u16, stored: u16 },
    /// CRC-valid but structurally wrong: unknown version, length disagreeing
    /// with the header, or a reserved trigger bit set.
    #[error("malformed packet: {0}")]
    Malformed(String),
    #[error("invalid packet for encoding: {0}")]
    Invalid(String),
}

/// One decoded wire frame. `codes` holds `samples_per_channel` frames of
/// `channel_count` signed 15-bit codes, frame-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevicePacket {
    pub channel_count: u8,
    pub samples_per_channel: u8,
    pub sequence: u32,
    pub timestamp_us: u64,
    pub trigger: bool,
    pub codes: Vec<i16>,
}

impl DevicePacket {
    pub fn encoded_len(channel_count: usize, samples_per_channel: usize) -> usize {
        PACKET_HEADER_LEN + 2 * channel_count * samples_per_channel + PACKET_CRC_LEN
    }

    pub fn frame(&self, i: usize) -> &[i16] {
        let cc = self.channel_count as usize;
        &self.codes[i * cc..(i + 1) * cc]
    }

    pub fn validate(&self) -> Result<(), PacketError> {
        if self.channel_count == 0 || self.samples_per_channel == 0 {
            return Err(PacketError::Invalid("channel_count and samples_per_channel must be >= 1".into()));
        }
        let n = self.channel_count as usize * self.samples_per_channel as usize;
        if self.codes.len() != n {
            return Err(PacketError::Invalid(format!("expected {n} codes, got {}", self.codes.len())));
        }
        if let Some(c) = self.codes.iter().find(|&&c| !(-16384..=16383).contains(&c)) {
            return Err(PacketError::Invalid(format!("code {c} outside the 15-bit range")));
        }
        Ok(())
    }
}

pub fn encode_packet(p: &DevicePacket) -> Result<Vec<u8>, PacketError> {
    p.validate()?;
    let len = DevicePacket::encoded_len(p.channel_count as usize, p.samples_per_channel as usize);
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(&PACKET_MAGIC.to_le_bytes());
    out.push(PACKET_VERSION);
    out.push(p.channel_count);
    out.push(p.samples_per_channel);
    out.extend_from_slice(&p.sequence.to_le_bytes());
    out.extend_from_slice(&p.timestamp_us.to_le_bytes());
    for (i, &c) in p.codes.iter().enumerate() {
        let mut w = (c as i32 + CODE_OFFSET) as u16;
        if i == 0 && p.trigger {
            w |= TRIGGER_BIT;
        }
        out.extend_from_slice(&w.to_le_bytes());
    }
    let crc = crc16(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

/// Checks run in a fixed order: length floor, magic, CRC, then structure.
/// Checking the CRC before the header-implied length means any single-bit
/// corruption is reported as a CRC or magic error.
pub fn decode_packet(bytes: &[u8]) -> Result<DevicePacket, PacketError> {
    let min = DevicePacket::encoded_len(1, 1);
    if bytes.len() < min {
        return Err(PacketError::Short { len: bytes.len(), min });
    }
    let magic = u16::from_le_bytes([bytes[0], bytes[1]]);
    if magic != PACKET_MAGIC {
        return Err(PacketError::BadMagic(magic));
    }
    let body = &bytes[..bytes.len() - PACKET_CRC_LEN];
    let stored = u16::from_le_bytes([bytes[bytes.len() - 2], bytes[bytes.len() - 1]]);
    let computed = crc16(body);
    if computed != stored {
        return Err(PacketError::BadCrc { computed, stored });
    }
    if bytes[2] != PACKET_VERSION {
        return Err(PacketError::Malformed(format!("unsupported version {}", bytes[2])));
    }
    let cc = bytes[3];
    let spc = bytes[4];
    if cc == 0 || spc == 0 {
        return Err(PacketError::Malformed("zero channel_count or samples_per_channel".into()));
    }
    let expected = DevicePacket::encoded_len(cc as usize, spc as usize);
    if bytes.len() != expected {
        return Err(PacketError::Malformed(format!(
            "header implies {expected} bytes, buffer has {}",
            bytes.len()
        )));
    }
    let sequence = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    let timestamp_us = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    let n = cc as usize * spc as usize;
    let mut codes = Vec::with_capacity(n);
    let mut trigger = false;
    for i in 0..n {
        let o = PACKET_HEADER_LEN + 2 * i;
        let mut w = u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        if w & TRIGGER_BIT != 0 {
            if i != 0 {
                return Err(PacketError::Malformed(format!("reserved bit set in payload word {i}")));
            }
            trigger = true;
            w &= !TRIGGER_BIT;
        }
        codes.push((w as i32 - CODE_OFFSET) as i16);
    }
    Ok(DevicePacket {
        channel_count: cc,
        samples_per_channel: spc,
        sequence,
        timestamp_us,
        trigger,
        codes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    PromptWait,
    PromptWord,
    PromptEnd,
}

impl TriggerKind {
    pub const CYCLE: [TriggerKind; 3] = [TriggerKind::PromptWait, TriggerKind::PromptWord, TriggerKind::PromptEnd];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub kind: TriggerKind,
    pub sample_index: u64,
    pub timestamp_us: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub packets_received: u64,
    pub packets_lost: u64,
    pub crc_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub samples_per_channel: u8,
    pub sample_rate_hz: u32,
    pub loss_rate: f64,
    pub seed: u64,
    pub start_timestamp_us: u64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            samples_per_channel: DEFAULT_SAMPLES_PER_CHANNEL,
            sample_rate_hz: 1000,
            loss_rate: 0.0,
            seed: 0,
            start_timestamp_us: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error("invalid device config: {0}")]
    Config(String),
    #[error("channel count changed from {from} to {to} mid-stream")]
    ChannelCountChanged { from: u8, to: u8 },
    #[error("source channels have unequal lengths")]
    RaggedSource,
    #[error("trigger at sample {0} is not after the previous one")]
    TriggerOrder(u64),
}

/// Stateful packetizer. Blocks of samples can be pushed incrementally; the
/// sequence counter advances for every packet built, including dropped ones.
#[derive(Debug)]
pub struct DeviceSimulator {
    cfg: DeviceConfig,
    channel_count: u8,
    rng: rand_chacha::ChaCha8Rng,
    sequence: u32,
    emitted_samples: u64,
    pending: Vec<i16>,
    pending_frames: usize,
    triggers: std::collections::VecDeque<u64>,
    last_trigger: Option<u64>,
}

impl DeviceSimulator {
    pub fn new(cfg: DeviceConfig, channel_count: usize) -> Result<Self, DeviceError> {
        if !(0.0..1.0).contains(&cfg.loss_rate) {
            return Err(DeviceError::Config(format!("loss_rate {} not in [0, 1)", cfg.loss_rate)));
        }
        if cfg.samples_per_channel == 0 || cfg.sample_rate_hz == 0 {
            return Err(DeviceError::Config("samples_per_channel and sample_rate must be >= 1".into()));
        }
        if channel_count == 0 || channel_count > u8::MAX as usize {
            return Err(DeviceError::Config(format!("channel_count {channel_count} out of range")));
        }
        Ok(DeviceSimulator {
            rng: seed::rng(cfg.seed),
            cfg,
            channel_count: channel_count as u8,
            sequence: 0,
            emitted_samples: 0,
            pending: Vec::new(),
            pending_frames: 0,
            triggers: Default::default(),
            last_trigger: None,
        })
    }

    /// Registers a trigger at an absolute sample index. Must be called before
    /// the samples containing it are packetized.
    pub fn trigger_at(&mut self, sample_index: u64) -> Result<(), DeviceError> {
        if self.last_trigger.is_some_and(|t| sample_index <= t) {
            return Err(DeviceError::TriggerOrder(sample_index));
        }
        self.last_trigger = Some(sample_index);
        self.triggers.push_back(sample_index);
        Ok(())
    }

    /// Appends channel-major samples and returns the packets completed (after
    /// loss).
    pub fn push(&mut self, channels: &[Vec<i16>]) -> Result<Vec<DevicePacket>, DeviceError> {
        if channels.len() != self.channel_count as usize {
            return Err(DeviceError::ChannelCountChanged {
                from: self.channel_count,
                to: channels.len().min(255) as u8,
            });
        }
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return Err(DeviceError::RaggedSource);
        }
        let spc = self.cfg.samples_per_channel as usize;
        let mut out = Vec::new();
        for t in 0..n {
            for ch in channels {
                self.pending.push(ch[t]);
            }
            self.pending_frames += 1;
            if self.pending_frames == spc {
                if let Some(p) = self.flush_packet() {
                    out.push(p);
                }
            }
        }
        Ok(out)
    }

    /// Emits any partial trailing packet (with a reduced samples_per_channel).
    pub fn finish(&mut self) -> Option<DevicePacket> {
        if self.pending_frames == 0 {
            None
        } else {
            self.flush_packet()
        }
    }

    fn flush_packet(&mut self) -> Option<DevicePacket> {
        let frames = self.pending_frames as u64;
        let start = self.emitted_samples;
        let end = start + frames;
        // the trigger line is sampled at frame start: the first packet
        // starting at or after the event carries it
        let mut trigger = false;
        while let Some(&t) = self.triggers.front() {
            if t <= start {
                trigger = true;
                self.triggers.pop_front();
            } else {
                break;
            }
        }
        let packet = DevicePacket {
            channel_count: self.channel_count,
            samples_per_channel: frames as u8,
            sequence: self.sequence,
            timestamp_us: self.cfg.start_timestamp_us + start * 1_000_000 / self.cfg.sample_rate_hz as u64,
            trigger,
            codes: std::mem::take(&mut self.pending),
        };
        self.pending_frames = 0;
        self.emitted_samples = end;
        self.sequence = self.sequence.wrapping_add(1);
        let dropped = self.cfg.loss_rate > 0.0 && self.rng.random::<f64>() < self.cfg.loss_rate;
        (!dropped).then_some(packet)
    }

    pub fn emitted_samples(&self) -> u64 {
        self.emitted_samples
    }

    pub fn sequence(&self) -> u32 {
        self.sequence
    }
}

/// Packetizes a whole channel-major recording. Triggers are absolute sample
/// indices, strictly increasing.
pub fn simulate_device(
    channels: &[Vec<i16>],
    triggers: &[u64],
    cfg: &DeviceConfig,
) -> Result<Vec<DevicePacket>, DeviceError> {
    let mut sim = DeviceSimulator::new(cfg.clone(), channels.len())?;
    for &t in triggers {
        sim.trigger_at(t)?;
    }
    let mut out = sim.push(channels)?;
    out.extend(sim.finish());
    Ok(out)
}

/// Receiver output. `gaps` lists the zero-filled `[start, end)` sample ranges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reassembled {
    pub channels: Vec<Vec<i16>>,
    pub triggers: Vec<TriggerEvent>,
    pub stats: StreamStats,
    pub gaps: Vec<(u64, u64)>,
}

impl Reassembled {
    pub fn sample_count(&self) -> u64 {
        self.channels.first().map_or(0, |c| c.len() as u64)
    }
}

/// Incremental receiver. Gap length is inferred from the sequence delta times
/// the previous packet's samples_per_channel; stale or duplicate sequence
/// numbers are discarded.
#[derive(Debug, Default)]
pub struct Reassembler {
    out: Reassembled,
    channel_count: Option<u8>,
    next_sequence: Option<u32>,
    last_spc: u8,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Decodes and pushes raw bytes. CRC failures are counted and skipped;
    /// other decode errors are returned.
    pub fn push_bytes(&mut self, bytes: &[u8]) -> Result<(), ReassembleError> {
        match decode_packet(bytes) {
            Ok(p) => self.push(&p),
            Err(PacketError::BadCrc { .. }) => {
                self.out.stats.crc_failures += 1;
                Ok(())
            }
            Err(e) => Err(ReassembleError::Packet(e)),
        }
    }

    pub fn push(&mut self, p: &DevicePacket) -> Result<(), ReassembleError> {
        match self.channel_count {
            None => {
                self.channel_count = Some(p.channel_count);
                self.out.channels = vec![Vec::new(); p.channel_count as usize];
            }
            Some(cc) if cc != p.channel_count => {
                return Err(ReassembleError::Device(DeviceError::ChannelCountChanged {
                    from: cc,
                    to: p.channel_count,
                }));
            }
            Some(_) => {}
        }
        if let Some(expected) = self.next_sequence {
            let delta = p.sequence.wrapping_sub(expected);
            if delta > u32::MAX / 2 {
                log::warn!("discarding stale packet seq={} (expected {expected})", p.sequence);
                return Ok(());
            }
            if delta > 0 {
                let start = self.out.sample_count();
                let missing = delta as u64 * self.last_spc as u64;
                for ch in &mut self.out.channels {
                    ch.resize(ch.len() + missing as usize, 0);
                }
                self.out.stats.packets_lost += delta as u64;
                self.out.gaps.push((start, start + missing));
            }
        }
        let start = self.out.sample_count();
        if p.trigger {
            let kind = TriggerKind::CYCLE[self.out.triggers.len() % 3];
            self.out.triggers.push(TriggerEvent {
                kind,
                sample_index: start,
                timestamp_us: p.timestamp_us,
            });
        }
        let cc = p.channel_count as usize;
        for (i, &c) in p.codes.iter().enumerate() {
            self.out.channels[i % cc].push(c);
        }
        self.out.stats.packets_received += 1;
        self.next_sequence = Some(p.sequence.wrapping_add(1));
        self.last_spc = p.samples_per_channel;
        Ok(())
    }

    pub fn stats(&self) -> StreamStats {
        self.out.stats
    }

    pub fn sample_count(&self) -> u64 {
        self.out.sample_count()
    }

    pub fn finish(self) -> Reassembled {
        self.out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReassembleError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Packet(#[from] PacketError),
}

pub fn reassemble<'a>(packets: impl IntoIterator<Item = &'a DevicePacket>) -> Result<Reassembled, ReassembleError> {
    let mut r = Reassembler::new();
    for p in packets {
        r.push(p)?;
    }
    Ok(r.finish())
}

/// One line of a packet vector file: the wire bytes and the fields they
/// decode to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketVector {
    pub hex: String,
    #[serde(flatten)]
    pub packet: DevicePacket,
}

#[derive(Debug, thiserror::Error)]
pub enum VectorFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
}

pub fn packet_vector(p: &DevicePacket) -> Result<PacketVector, PacketError> {
    Ok(PacketVector {
        hex: hex::encode(encode_packet(p)?),
        packet: p.clone(),
    })
}

/// Writes JSON lines, one [`PacketVector`] per packet.
pub fn write_packet_vectors(path: &std::path::Path, packets: &[DevicePacket]) -> Result<(), VectorFileError> {
    let mut buf = Vec::new();
    for (i, p) in packets.iter().enumerate() {
        let v = packet_vector(p).map_err(|e| VectorFileError::Line { line: i + 1, reason: e.to_string() })?;
        serde_json::to_writer(&mut buf, &v).expect("vector serializes");
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|source| VectorFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a vector file, checking every line's bytes decode to its fields.
pub fn read_packet_vectors(path: &std::path::Path) -> Result<Vec<PacketVector>, VectorFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| VectorFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| VectorFileError::Line { line: i + 1, reason };
        let v: PacketVector = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let bytes = hex::decode(&v.hex).map_err(|e| bad(e.to_string()))?;
        let decoded = decode_packet(&bytes).map_err(|e| bad(e.to_string()))?;
        if decoded != v.packet {
            return Err(bad("bytes and fields disagree".into()));
        }
        out.push(v);
    }
    Ok(out)
}
