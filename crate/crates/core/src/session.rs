//! Prompt-session protocol: the wait / word / wait script, its state machine,
//! trigger bookkeeping and utterance slicing.

use crate::dataset::{default_roles, AnchorPolicy, Dataset, DatasetError, Provenance, Utterance, DEFAULT_VOLTS_PER_LSB, UTTERANCE_SAMPLES};
use crate::device::{reassemble, DevicePacket, ReassembleError, Reassembled, StreamStats, TriggerEvent, TriggerKind};
use crate::seed;
use crate::synth::SynthModel;
use crate::word::Word;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Width of the RMS envelope used by the energy anchor.
pub const ENERGY_WINDOW_SAMPLES: usize = 250;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session script: {0}")]
    Script(String),
    #[error("device stream ended after {got} samples; the script needs {needed}")]
    StreamEnded { needed: u64, got: u64 },
    #[error("trigger mismatch: {0}")]
    TriggerMismatch(String),
    #[error("window [{start}, {end}) exceeds a {len}-sample block")]
    WindowOutOfBounds { start: i64, end: i64, len: usize },
    #[error("illegal transition from {from} on {event}")]
    IllegalTransition { from: String, event: String },
    #[error(transparent)]
    Reassemble(#[from] ReassembleError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionScript {
    pub prompts: Vec<Word>,
    pub wait_before_s: f64,
    pub word_s: f64,
    pub wait_after_s: f64,
    pub repetitions: usize,
}

impl Default for SessionScript {
    fn default() -> Self {
        SessionScript {
            prompts: Word::ALL.to_vec(),
            wait_before_s: 3.0,
            word_s: 3.0,
            wait_after_s: 3.0,
            repetitions: 10,
        }
    }
}

fn samples(s: f64, fs: u32) -> usize {
    (s * fs as f64).round() as usize
}

impl SessionScript {
    pub fn validate(&self) -> Result<(), SessionError> {
        for (name, v) in [("wait_before_s", self.wait_before_s), ("word_s", self.word_s), ("wait_after_s", self.wait_after_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SessionError::Script(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Prompts in presentation order: each repetition runs through the whole
    /// word list. Pairs are (word, repetition index).
    pub fn prompt_sequence(&self) -> Vec<(Word, usize)> {
        (0..self.repetitions)
            .flat_map(|r| self.prompts.iter().map(move |&w| (w, r)))
            .collect()
    }

    pub fn prompt_count(&self) -> usize {
        self.prompts.len() * self.repetitions
    }

    /// Sub-phase start offsets within a block: wait1, word, wait2.
    pub fn phase_offsets(&self, fs: u32) -> [usize; 3] {
        let a = samples(self.wait_before_s, fs);
        let b = a + samples(self.word_s, fs);
        [0, a, b]
    }

    pub fn block_samples(&self, fs: u32) -> usize {
        samples(self.wait_before_s, fs) + samples(self.word_s, fs) + samples(self.wait_after_s, fs)
    }

    pub fn word_phase(&self, fs: u32) -> Range<usize> {
        let o = self.phase_offsets(fs);
        o[1]..o[2]
    }

    pub fn total_samples(&self, fs: u32) -> u64 {
        (self.block_samples(fs) * self.prompt_count()) as u64
    }

    /// Absolute trigger positions for the whole script.
    pub fn trigger_schedule(&self, fs: u32) -> Vec<(u64, TriggerKind)> {
        let block = self.block_samples(fs) as u64;
        let offs = self.phase_offsets(fs);
        (0..self.prompt_count() as u64)
            .flat_map(|b| {
                offs.iter()
                    .zip(TriggerKind::CYCLE)
                    .map(move |(&o, k)| (b * block + o as u64, k))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubPhase {
    Wait1,
    Word,
    Wait2,
}

impl SubPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            SubPhase::Wait1 => "wait1",
            SubPhase::Word => "word",
            SubPhase::Wait2 => "wait2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Armed,
    Prompting { prompt_index: usize, sub_phase: SubPhase },
    Done,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Armed => "armed",
            Phase::Prompting { .. } => "prompting",
            Phase::Done => "done",
        }
    }
}

/// Phase of the script at an absolute sample index.
pub fn phase_at(script: &SessionScript, fs: u32, sample: u64) -> Phase {
    let block = script.block_samples(fs) as u64;
    let idx = (sample / block) as usize;
    if idx >= script.prompt_count() {
        return Phase::Done;
    }
    let off = (sample % block) as usize;
    let o = script.phase_offsets(fs);
    let sub_phase = if off < o[1] {
        SubPhase::Wait1
    } else if off < o[2] {
        SubPhase::Word
    } else {
        SubPhase::Wait2
    };
    Phase::Prompting { prompt_index: idx, sub_phase }
}

/// Session state machine. Transitions: Idle → Armed → Prompting (every
/// sub-phase of every prompt, in order) → Done; `stop` returns to Idle from
/// anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub phase: Phase,
    pub current_sample: u64,
}

impl Default for SessionState {
    fn default() -> Self {
        SessionState {
            phase: Phase::Idle,
            current_sample: 0,
        }
    }
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    fn illegal(&self, event: &str) -> SessionError {
        SessionError::IllegalTransition {
            from: self.phase.name().into(),
            event: event.into(),
        }
    }

    pub fn arm(&mut self) -> Result<(), SessionError> {
        match self.phase {
            Phase::Idle => {
                self.phase = Phase::Armed;
                self.current_sample = 0;
                Ok(())
            }
            _ => Err(self.illegal("arm")),
        }
    }

    /// Armed → first prompt (or straight to Done for an empty script).
    pub fn begin(&mut self, script: &SessionScript, fs: u32) -> Result<Phase, SessionError> {
        if self.phase != Phase::Armed {
            return Err(self.illegal("begin"));
        }
        self.phase = phase_at(script, fs, 0);
        Ok(self.phase)
    }

    /// Moves the clock to `sample`, returning every phase entered on the way
    /// with its start sample. Phases are never skipped, however large the
    /// jump.
    pub fn advance_to(&mut self, script: &SessionScript, fs: u32, sample: u64) -> Result<Vec<(Phase, u64)>, SessionError> {
        let mut entered = Vec::new();
        match self.phase {
            Phase::Prompting { .. } => {}
            Phase::Done => return Ok(entered),
            _ => return Err(self.illegal("advance")),
        }
        let block = script.block_samples(fs) as u64;
        let offs = script.phase_offsets(fs);
        while let Phase::Prompting { prompt_index, sub_phase } = self.phase {
            let next_start = match sub_phase {
                SubPhase::Wait1 => prompt_index as u64 * block + offs[1] as u64,
                SubPhase::Word => prompt_index as u64 * block + offs[2] as u64,
                SubPhase::Wait2 => (prompt_index as u64 + 1) * block,
            };
            if next_start > sample {
                break;
            }
            self.phase = phase_at(script, fs, next_start);
            entered.push((self.phase, next_start));
        }
        self.current_sample = self.current_sample.max(sample);
        Ok(entered)
    }

    pub fn stop(&mut self) {
        self.phase = Phase::Idle;
        self.current_sample = 0;
    }
}

/// Picks the `len`-sample window for one prompt block.
///
/// `Center` centers on the midpoint of `word_phase`. `Energy` centers on the
/// peak of a 250-sample RMS envelope (summed over channels) inside
/// `word_phase`; a flat-topped peak resolves to the middle of its first
/// maximal run.
pub fn slice_window(
    block: &[Vec<i16>],
    word_phase: Range<usize>,
    len: usize,
    anchor: AnchorPolicy,
) -> Result<Range<usize>, SessionError> {
    let n = block.first().map_or(0, Vec::len);
    let center = match anchor {
        AnchorPolicy::Center => (word_phase.start + word_phase.end) / 2,
        AnchorPolicy::Energy => energy_peak(block, word_phase.clone(), n),
    };
    let start = center as i64 - (len / 2) as i64;
    let end = start + len as i64;
    if start < 0 || end > n as i64 || word_phase.end > n {
        return Err(SessionError::WindowOutOfBounds { start, end, len: n });
    }
    Ok(start as usize..end as usize)
}

fn energy_peak(block: &[Vec<i16>], word_phase: Range<usize>, n: usize) -> usize {
    let mut prefix = vec![0u64; n + 1];
    for t in 0..n {
        let e: u64 = block.iter().map(|c| (c[t] as i64 * c[t] as i64) as u64).sum();
        prefix[t + 1] = prefix[t] + e;
    }
    let half = ENERGY_WINDOW_SAMPLES / 2;
    let energy = |i: usize| {
        let lo = i.saturating_sub(half);
        let hi = (i + ENERGY_WINDOW_SAMPLES - half).min(n);
        prefix[hi] - prefix[lo]
    };
    let range = word_phase.start.min(n)..word_phase.end.min(n);
    let Some(best) = range.clone().map(energy).max() else {
        return (word_phase.start + word_phase.end) / 2;
    };
    let first = range.clone().find(|&i| energy(i) == best).unwrap();
    let last = (first..range.end).take_while(|&i| energy(i) == best).last().unwrap();
    (first + last) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    pub anchor: AnchorPolicy,
    pub sample_rate_hz: u32,
    pub volts_per_lsb: f64,
    /// Stamped on triggers that were lost with their packet.
    pub start_timestamp_us: u64,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            anchor: AnchorPolicy::Center,
            sample_rate_hz: 1000,
            volts_per_lsb: DEFAULT_VOLTS_PER_LSB,
            start_timestamp_us: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    pub dataset: Dataset,
    /// Three per completed prompt, at the scheduled offsets.
    pub triggers: Vec<TriggerEvent>,
    pub stats: StreamStats,
}

/// Cuts utterances out of a reassembled stream. With `partial`, only the
/// fully received prompt blocks are used and a short stream is not an error.
pub fn slice_session(
    script: &SessionScript,
    stream: &Reassembled,
    speaker: u8,
    opts: &SessionOptions,
    partial: bool,
) -> Result<SessionOutput, SessionError> {
    script.validate()?;
    let fs = opts.sample_rate_hz;
    let block = script.block_samples(fs);
    let have = stream.sample_count();
    let needed = script.total_samples(fs);
    if have < needed && !partial {
        return Err(SessionError::StreamEnded { needed, got: have });
    }
    let complete = ((have / block as u64) as usize).min(script.prompt_count());
    let limit = (complete * block) as u64;

    let schedule = script.trigger_schedule(fs);
    let in_gap = |s: u64| stream.gaps.iter().any(|&(a, b)| a <= s && s < b);
    let observed: Vec<&TriggerEvent> = stream.triggers.iter().filter(|t| t.sample_index < limit).collect();
    let mut triggers = Vec::new();
    let mut k = 0;
    for &(idx, kind) in schedule.iter().filter(|(i, _)| *i < limit) {
        match observed.get(k) {
            Some(t) if t.sample_index == idx => {
                triggers.push(TriggerEvent { kind, sample_index: idx, timestamp_us: t.timestamp_us });
                k += 1;
            }
            Some(t) if t.sample_index < idx => {
                return Err(SessionError::TriggerMismatch(format!(
                    "unexpected trigger at sample {} (next scheduled at {idx})",
                    t.sample_index
                )));
            }
            _ if in_gap(idx) => triggers.push(TriggerEvent {
                kind,
                sample_index: idx,
                timestamp_us: opts.start_timestamp_us + idx * 1_000_000 / fs as u64,
            }),
            _ => return Err(SessionError::TriggerMismatch(format!("missing trigger at sample {idx}"))),
        }
    }
    if let Some(t) = observed.get(k) {
        return Err(SessionError::TriggerMismatch(format!("unexpected trigger at sample {}", t.sample_index)));
    }

    let channel_count = stream.channels.len().max(1);
    let word_phase = script.word_phase(fs);
    let mut utterances = Vec::with_capacity(complete);
    for (b, (word, rep)) in script.prompt_sequence().into_iter().take(complete).enumerate() {
        let lo = b * block;
        let blk: Vec<Vec<i16>> = stream.channels.iter().map(|c| c[lo..lo + block].to_vec()).collect();
        let w = slice_window(&blk, word_phase.clone(), UTTERANCE_SAMPLES, opts.anchor)?;
        let samples: Vec<Vec<i16>> = blk.iter().map(|c| c[w.clone()].to_vec()).collect();
        utterances.push(Utterance::new(
            SynthModel::utterance_id(word, speaker, rep),
            speaker,
            word,
            fs,
            opts.volts_per_lsb,
            samples,
        )?);
    }
    let provenance = Provenance::Recorded { anchor: opts.anchor };
    let dataset = if utterances.is_empty() {
        Dataset::empty(channel_count, provenance)
    } else {
        Dataset::new(utterances, default_roles(channel_count), provenance)?
    };
    Ok(SessionOutput {
        dataset,
        triggers,
        stats: stream.stats,
    })
}

/// Reassembles `packets`, checks triggers against the script and slices one
/// utterance per prompt.
pub fn run_session<'a>(
    script: &SessionScript,
    packets: impl IntoIterator<Item = &'a DevicePacket>,
    speaker: u8,
    opts: &SessionOptions,
) -> Result<SessionOutput, SessionError> {
    let stream = reassemble(packets)?;
    slice_session(script, &stream, speaker, opts, false)
}

/// Simulated participant: quiet rest activity for each prompt block with the
/// synthetic utterance placed on the centered word window.
#[derive(Debug, Clone)]
pub struct SimulatedSession<'m> {
    pub model: &'m SynthModel,
    pub script: SessionScript,
    pub speaker: u8,
    pub seed: u64,
}

impl SimulatedSession<'_> {
    pub fn block_samples(&self) -> usize {
        self.script.block_samples(self.model.config.sample_rate_hz)
    }

    /// Channel-major samples of prompt block `index`.
    pub fn block(&self, index: usize) -> Vec<Vec<i16>> {
        let fs = self.model.config.sample_rate_hz;
        let len = self.block_samples();
        let (word, rep) = self.script.prompt_sequence()[index];
        let mut blk = self
            .model
            .render_rest(len, seed::derive_path(self.seed, &[0x5E, self.speaker as u64, index as u64]));
        let (utt, _) = self.model.render(word, self.speaker, self.model.utterance_seed(word, self.speaker, rep));
        let n = utt[0].len();
        let phase = self.script.word_phase(fs);
        let start = ((phase.start + phase.end) / 2).saturating_sub(n / 2).min(len.saturating_sub(n));
        for (dst, src) in blk.iter_mut().zip(&utt) {
            let m = n.min(len);
            dst[start..start + m].copy_from_slice(&src[..m]);
        }
        blk
    }

    /// The whole recording plus its trigger positions.
    pub fn render_all(&self) -> (Vec<Vec<i16>>, Vec<u64>) {
        let cc = self.model.config.channel_count;
        let mut channels = vec![Vec::with_capacity(self.script.total_samples(self.model.config.sample_rate_hz) as usize); cc];
        for i in 0..self.script.prompt_count() {
            for (dst, src) in channels.iter_mut().zip(self.block(i)) {
                dst.extend(src);
            }
        }
        let triggers = self
            .script
            .trigger_schedule(self.model.config.sample_rate_hz)
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        (channels, triggers)
    }
}
