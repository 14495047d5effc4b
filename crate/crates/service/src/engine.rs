//! The session engine. It owns all session state and is driven by two
//! inputs only: control messages and clock ticks. Each returns the frames to
//! broadcast, so the engine itself does no I/O besides persisting datasets.

use crate::protocol::{ClientMessage, ErrorCode, ServerMessage};
use emgdeck::dataset::{save_dataset, AnchorPolicy};
use emgdeck::device::{encode_packet, read_packet_vectors, DeviceConfig, DevicePacket, DeviceSimulator, Reassembler};
use emgdeck::session::{phase_at, slice_session, Phase, SessionOptions, SessionScript, SessionState, SimulatedSession};
use emgdeck::synth::{SynthConfig, SynthModel};
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Text(String),
    Binary(Vec<u8>),
}

impl From<ServerMessage> for Frame {
    fn from(m: ServerMessage) -> Self {
        Frame::Text(m.to_json())
    }
}

#[derive(Debug, Clone)]
pub enum DeviceKind {
    /// Synthetic participant streamed through the packet simulator.
    Simulated { synth: SynthConfig, device: DeviceConfig },
    /// Replays a packet vector file.
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub device: DeviceKind,
    pub output_dir: PathBuf,
    /// Device time elapsed per wall-clock second.
    pub speed: f64,
    pub tick_ms: u64,
    pub sample_rate_hz: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            device: DeviceKind::Simulated {
                synth: SynthConfig::default(),
                device: DeviceConfig::default(),
            },
            output_dir: PathBuf::from("sessions"),
            speed: 1.0,
            tick_ms: 100,
            sample_rate_hz: 1000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("synthetic model: {0}")]
    Synth(#[from] emgdeck::synth::SynthError),
    #[error("device: {0}")]
    Device(#[from] emgdeck::device::DeviceError),
    #[error("packet file: {0}")]
    Vectors(#[from] emgdeck::device::VectorFileError),
    #[error("invalid engine config: {0}")]
    Config(String),
}

trait PacketSource: Send {
    /// Packets covering samples up to `upto` (exclusive), as far as available.
    fn pull(&mut self, upto: u64) -> Vec<DevicePacket>;
    fn produced(&self) -> u64;
    fn exhausted(&self) -> bool;
}

struct SimSource {
    model: Arc<SynthModel>,
    script: SessionScript,
    speaker: u8,
    seed: u64,
    sim: DeviceSimulator,
    block: Option<(usize, Vec<Vec<i16>>)>,
    offset: u64,
    total: u64,
}

impl SimSource {
    fn block_len(&self) -> u64 {
        self.script.block_samples(self.model.config.sample_rate_hz) as u64
    }
}

impl PacketSource for SimSource {
    fn pull(&mut self, upto: u64) -> Vec<DevicePacket> {
        let mut out = Vec::new();
        let upto = upto.min(self.total);
        let block_len = self.block_len();
        while self.offset < upto {
            let idx = (self.offset / block_len) as usize;
            if self.block.as_ref().is_none_or(|(i, _)| *i != idx) {
                let session = SimulatedSession {
                    model: &self.model,
                    script: self.script.clone(),
                    speaker: self.speaker,
                    seed: self.seed,
                };
                self.block = Some((idx, session.block(idx)));
            }
            let (_, blk) = self.block.as_ref().unwrap();
            let lo = (self.offset - idx as u64 * block_len) as usize;
            let hi = ((upto - idx as u64 * block_len) as usize).min(block_len as usize);
            let chunk: Vec<Vec<i16>> = blk.iter().map(|c| c[lo..hi].to_vec()).collect();
            out.extend(self.sim.push(&chunk).expect("channel count fixed"));
            self.offset += (hi - lo) as u64;
        }
        if self.offset >= self.total {
            out.extend(self.sim.finish());
        }
        out
    }

    fn produced(&self) -> u64 {
        self.sim.emitted_samples()
    }

    fn exhausted(&self) -> bool {
        self.offset >= self.total && self.sim.emitted_samples() >= self.total
    }
}

struct FileSource {
    packets: Vec<DevicePacket>,
    next: usize,
    produced: u64,
    last: Option<(u32, u8)>,
}

impl PacketSource for FileSource {
    fn pull(&mut self, upto: u64) -> Vec<DevicePacket> {
        let mut out = Vec::new();
        while self.next < self.packets.len() && self.produced < upto {
            let p = self.packets[self.next].clone();
            if let Some((seq, spc)) = self.last {
                let delta = p.sequence.wrapping_sub(seq.wrapping_add(1));
                if delta < u32::MAX / 2 {
                    self.produced += delta as u64 * spc as u64;
                }
            }
            self.produced += p.samples_per_channel as u64;
            self.last = Some((p.sequence, p.samples_per_channel));
            self.next += 1;
            out.push(p);
        }
        out
    }

    fn produced(&self) -> u64 {
        self.produced
    }

    fn exhausted(&self) -> bool {
        self.next >= self.packets.len()
    }
}

struct Active {
    script: SessionScript,
    speaker: u8,
    anchor: AnchorPolicy,
    source: Box<dyn PacketSource>,
    reassembler: Reassembler,
    target: u64,
}

pub struct Engine {
    cfg: EngineConfig,
    state: SessionState,
    active: Option<Active>,
    model: Option<Arc<SynthModel>>,
    sessions: usize,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self, EngineError> {
        if !(cfg.speed > 0.0 && cfg.speed.is_finite()) || cfg.tick_ms == 0 {
            return Err(EngineError::Config("speed and tick_ms must be positive".into()));
        }
        let model = match &cfg.device {
            DeviceKind::Simulated { synth, .. } => Some(Arc::new(SynthModel::new(synth.clone())?)),
            DeviceKind::File(_) => None,
        };
        Ok(Engine {
            cfg,
            state: SessionState::new(),
            active: None,
            model,
            sessions: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn tick_ms(&self) -> u64 {
        self.cfg.tick_ms
    }

    pub fn is_active(&self) -> bool {
        self.active.is_some()
    }

    fn state_frame(&self) -> Frame {
        ServerMessage::State {
            state: self.state.phase.name().into(),
        }
        .into()
    }

    /// Applies a control message. `Err` frames go to the sender only.
    pub fn handle(&mut self, msg: ClientMessage) -> Result<Vec<Frame>, ServerMessage> {
        match msg {
            ClientMessage::StartSession { script, speaker, anchor } => {
                if self.state.phase != Phase::Idle {
                    return Err(ServerMessage::error(ErrorCode::Busy, "a session is already running"));
                }
                script
                    .validate()
                    .map_err(|e| ServerMessage::error(ErrorCode::BadMessage, e.to_string()))?;
                let source = self
                    .make_source(&script, speaker)
                    .map_err(|e| ServerMessage::error(ErrorCode::SessionFailed, e.to_string()))?;
                self.state.arm().expect("idle arms");
                let mut frames = vec![self.state_frame()];
                let first = self.state.begin(&script, self.cfg.sample_rate_hz).expect("armed begins");
                frames.push(self.state_frame());
                self.active = Some(Active {
                    script,
                    speaker,
                    anchor,
                    source,
                    reassembler: Reassembler::new(),
                    target: 0,
                });
                if first == Phase::Done {
                    frames.extend(self.finish(None));
                } else {
                    frames.push(self.prompt_frame(first, 0));
                }
                Ok(frames)
            }
            ClientMessage::Stop => {
                if self.active.is_none() {
                    self.state.stop();
                    return Ok(vec![self.state_frame()]);
                }
                Ok(self.finish(None))
            }
        }
    }

    fn make_source(&self, script: &SessionScript, speaker: u8) -> Result<Box<dyn PacketSource>, EngineError> {
        match &self.cfg.device {
            DeviceKind::Simulated { device, synth } => {
                let model = self.model.clone().expect("simulated device has a model");
                if !model.config.speaker_gains.contains_key(&speaker) {
                    return Err(EngineError::Config(format!("no synthetic speaker {speaker}")));
                }
                let mut sim = DeviceSimulator::new(device.clone(), model.config.channel_count)?;
                for (t, _) in script.trigger_schedule(self.cfg.sample_rate_hz) {
                    sim.trigger_at(t)?;
                }
                Ok(Box::new(SimSource {
                    total: script.total_samples(self.cfg.sample_rate_hz),
                    model,
                    script: script.clone(),
                    speaker,
                    seed: emgdeck::seed::derive(synth.seed, self.sessions as u64),
                    sim,
                    block: None,
                    offset: 0,
                }))
            }
            DeviceKind::File(path) => {
                let packets = read_packet_vectors(path)?.into_iter().map(|v| v.packet).collect();
                Ok(Box::new(FileSource {
                    packets,
                    next: 0,
                    produced: 0,
                    last: None,
                }))
            }
        }
    }

    fn prompt_frame(&self, phase: Phase, sample: u64) -> Frame {
        let Some(a) = &self.active else {
            return self.state_frame();
        };
        let fs = self.cfg.sample_rate_hz;
        let Phase::Prompting { prompt_index, sub_phase } = phase else {
            return self.state_frame();
        };
        let block = a.script.block_samples(fs) as u64;
        let offs = a.script.phase_offsets(fs);
        let base = prompt_index as u64 * block;
        let end = match sub_phase {
            emgdeck::session::SubPhase::Wait1 => base + offs[1] as u64,
            emgdeck::session::SubPhase::Word => base + offs[2] as u64,
            emgdeck::session::SubPhase::Wait2 => base + block,
        };
        let word = a.script.prompt_sequence()[prompt_index].0;
        let text = if sub_phase == emgdeck::session::SubPhase::Word {
            word.text().to_string()
        } else {
            "wait".to_string()
        };
        ServerMessage::Prompt {
            text,
            phase: sub_phase.as_str().into(),
            remaining_ms: end.saturating_sub(sample) * 1000 / fs as u64,
            prompt_index,
            prompt_count: a.script.prompt_count(),
        }
        .into()
    }

    /// Advances device time by one tick.
    pub fn tick(&mut self) -> Vec<Frame> {
        let Some(a) = self.active.as_mut() else {
            return Vec::new();
        };
        let fs = self.cfg.sample_rate_hz;
        let step = (self.cfg.tick_ms as f64 / 1000.0 * fs as f64 * self.cfg.speed).round().max(1.0) as u64;
        a.target += step;
        let mut frames = Vec::new();
        for p in a.source.pull(a.target) {
            frames.push(Frame::Binary(encode_packet(&p).expect("simulated packets are valid")));
            if let Err(e) = a.reassembler.push(&p) {
                frames.extend(self.finish(Some(ServerMessage::error(ErrorCode::SessionFailed, e.to_string()))));
                return frames;
            }
        }
        let produced = a.source.produced();
        let exhausted = a.source.exhausted();
        let stats = a.reassembler.stats();
        let script = a.script.clone();
        let entered = self.state.advance_to(&script, fs, produced).unwrap_or_default();
        for (phase, start) in entered {
            if phase != Phase::Done {
                frames.push(self.prompt_frame(phase, start));
            }
        }
        if self.state.phase == Phase::Done {
            frames.push(ServerMessage::Stats(stats).into());
            frames.extend(self.finish(None));
            return frames;
        }
        frames.push(self.prompt_frame(phase_at(&script, fs, produced), produced));
        frames.push(ServerMessage::Stats(stats).into());
        if exhausted {
            frames.extend(self.finish(Some(ServerMessage::error(
                ErrorCode::DeviceEnded,
                format!("device stream ended at sample {produced}"),
            ))));
        }
        frames
    }

    /// Slices whatever complete prompts were recorded, persists them and
    /// returns to Idle.
    fn finish(&mut self, error: Option<ServerMessage>) -> Vec<Frame> {
        let mut frames = Vec::new();
        if let Some(e) = error {
            frames.push(e.into());
        }
        if let Some(a) = self.active.take() {
            let stream = a.reassembler.finish();
            let opts = SessionOptions {
                anchor: a.anchor,
                sample_rate_hz: self.cfg.sample_rate_hz,
                ..Default::default()
            };
            match slice_session(&a.script, &stream, a.speaker, &opts, true) {
                Ok(out) => {
                    let dir = self.cfg.output_dir.join(format!("session-{:03}-s{}", self.sessions, a.speaker));
                    match save_dataset(&out.dataset, &dir) {
                        Ok(_) => {
                            let meta = serde_json::json!({
                                "speaker": a.speaker,
                                "anchor": a.anchor,
                                "script": a.script,
                                "triggers": out.triggers,
                                "stats": out.stats,
                            });
                            let _ = std::fs::write(dir.join("session.json"), serde_json::to_vec_pretty(&meta).unwrap());
                            frames.push(
                                ServerMessage::Saved {
                                    path: dir.display().to_string(),
                                    utterances: out.dataset.len(),
                                }
                                .into(),
                            );
                        }
                        Err(e) => frames.push(ServerMessage::error(ErrorCode::SessionFailed, e.to_string()).into()),
                    }
                }
                Err(e) => frames.push(ServerMessage::error(ErrorCode::SessionFailed, e.to_string()).into()),
            }
            self.sessions += 1;
        }
        self.state.stop();
        frames.push(self.state_frame());
        frames
    }
}
