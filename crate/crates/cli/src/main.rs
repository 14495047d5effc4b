use clap::{Args, Parser, Subcommand, ValueEnum};
use emgdeck::acoustic::{load_features, save_features, AcousticFeatureSet, AcousticFeatureTrack, AcousticSource, LoadOptions};
use emgdeck::dataset::{load_dataset, save_dataset, AnchorPolicy, ChannelSet, Dataset};
use emgdeck::device::{
    decode_packet, encode_packet, read_packet_vectors, simulate_device, write_packet_vectors, DeviceConfig, DevicePacket,
    PACKET_MAGIC,
};
use emgdeck::dsp::{extract_stats, flatten_spectrogram, spectrogram, SpectrogramConfig, StatsFeatureVector};
use emgdeck::experiments::{
    run_ablation, run_classification, run_correlation, run_one_shot_confusion, AblationPolicy, ClassificationOptions,
    CorrelationConfig,
};
use emgdeck::learn::ForestConfig;
use emgdeck::session::{run_session, SessionOptions, SessionScript, SimulatedSession};
use emgdeck::synth::{SynthConfig, SynthModel};
use emgdeck::word::Word;
use rand::Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "emgdeck", version, about = "Neck-EMG word decoding toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Master seed for every random choice.
    #[arg(long, global = true, env = "EMGDECK_SEED", default_value_t = 2024)]
    seed: u64,
    /// Dataset directory to read.
    #[arg(short = 'd', long = "data-dir", global = true, default_value = "data")]
    data_dir: PathBuf,
    /// Output path. Reports go to standard output when omitted.
    #[arg(short = 'o', long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with paired acoustic features.
    Synth {
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        utterances_per_cell: Option<usize>,
        /// Speech feature dimension.
        #[arg(long)]
        acoustic_dim: Option<usize>,
    },
    /// Record a simulated session through the packet link and slice it.
    Record {
        #[arg(long, default_value_t = 1)]
        speaker: u8,
        #[arg(long, value_enum, default_value_t = Anchor::Center)]
        anchor: Anchor,
        #[arg(long, default_value_t = 0.0)]
        loss_rate: f64,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Also write the packet stream as a vector file.
        #[arg(long)]
        packets: Option<PathBuf>,
    },
    /// Run the WebSocket recording service.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, value_enum, default_value_t = DeviceArg::Sim)]
        device: DeviceArg,
        /// Packet vector file for `--device file`.
        #[arg(long)]
        packets: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, default_value_t = 0.0)]
        loss_rate: f64,
    },
    /// Per-utterance statistical features.
    Features,
    /// Spectrograms of every utterance, written as ACF1 tracks.
    Spectrogram {
        #[arg(long, default_value_t = 128)]
        nfft: usize,
        #[arg(long)]
        log: bool,
        #[arg(long, value_parser = parse_channels, default_value = "full13")]
        channels: ChannelSet,
    },
    /// Split classification accuracy.
    Classify {
        #[arg(long, value_parser = parse_channels, default_value = "full13")]
        channels: ChannelSet,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long, default_value_t = 10)]
        splits: usize,
        /// Shuffle labels within each speaker (chance control).
        #[arg(long)]
        permute: bool,
        #[arg(long)]
        assert_min_accuracy: Option<f64>,
    },
    /// Accuracy against the number of neck electrodes.
    Ablate {
        #[arg(long, default_value = "center-out")]
        policy: AblationPolicy,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long, default_value_t = 10)]
        splits: usize,
    },
    /// One-shot cross-speaker confusion matrix.
    Confusion {
        #[arg(long, value_parser = parse_channels, default_value = "full13")]
        channels: ChannelSet,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Correlation between speech features and EMG spectrogram bins.
    Correlate {
        /// Feature directory; defaults to `features` inside the data dir.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, value_parser = parse_channels, default_value = "neck10")]
        channels: ChannelSet,
        #[arg(long, default_value_t = 256)]
        nfft: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Also run the uniform-noise control.
        #[arg(long)]
        control: bool,
        #[arg(long)]
        assert_min_fraction: Option<f64>,
    },
    /// Packet codec tools.
    Packets {
        #[command(subcommand)]
        op: PacketOp,
    },
}

#[derive(Subcommand, Debug)]
enum PacketOp {
    /// Write seeded random packets as a vector file.
    Encode {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 13)]
        channels: u8,
    },
    /// Decode hex packets given as arguments, or a vector file with `-d`.
    Decode { hex: Vec<String> },
    /// Randomized round trips and single-bit corruptions.
    Fuzz {
        #[arg(long, default_value_t = 10_000)]
        count: usize,
    },
}

#[derive(Args, Debug, Clone)]
struct ForestArgs {
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 32)]
    max_depth: usize,
}

impl ForestArgs {
    fn config(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: self.trees,
            mtry: self.mtry,
            max_depth: self.max_depth,
            seed,
            ..ForestConfig::default()
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Anchor {
    Center,
    Energy,
}

impl From<Anchor> for AnchorPolicy {
    fn from(a: Anchor) -> Self {
        match a {
            Anchor::Center => AnchorPolicy::Center,
            Anchor::Energy => AnchorPolicy::Energy,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum DeviceArg {
    Sim,
    File,
}

fn parse_channels(s: &str) -> Result<ChannelSet, String> {
    s.parse()
}

enum Failure {
    Data(anyhow::Error),
    Assertion(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Writes a report to `-o` or standard output.
fn emit(g: &Global, json: &impl Serialize, text: impl FnOnce() -> String, csv: impl FnOnce() -> String) -> Outcome {
    let body = match g.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(json)?;
            s.push('\n');
            s
        }
        Format::Text => text(),
        Format::Csv => csv(),
    };
    match &g.output {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, body)?;
        }
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(body.as_bytes()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn summary(g: &Global, value: serde_json::Value) -> Outcome {
    let text = {
        let v = value.clone();
        move || {
            let mut s = String::new();
            if let Some(m) = v.as_object() {
                for (k, v) in m {
                    s.push_str(&format!("{k}: {v}\n"));
                }
            }
            s
        }
    };
    let csv = {
        let v = value.clone();
        move || {
            let m = v.as_object().cloned().unwrap_or_default();
            let keys: Vec<&str> = m.keys().map(String::as_str).collect();
            let vals: Vec<String> = m.values().map(|v| v.to_string()).collect();
            format!("{}\n{}\n", keys.join(","), vals.join(","))
        }
    };
    let g = Global { output: None, ..g.clone() };
    emit(&g, &value, text, csv)
}

fn load(g: &Global) -> Result<Dataset, Failure> {
    load_dataset(&g.data_dir).map_err(|e| Failure::Data(anyhow::anyhow!("{}: {e}", g.data_dir.display())))
}

fn run(cli: Cli) -> Outcome {
    let g = &cli.global;
    match cli.cmd {
        Command::Synth {
            noise_std,
            utterances_per_cell,
            acoustic_dim,
        } => {
            let mut cfg = SynthConfig {
                seed: g.seed,
                ..SynthConfig::default()
            };
            if let Some(v) = noise_std {
                cfg.noise_std = v;
            }
            if let Some(v) = utterances_per_cell {
                cfg.utterances_per_cell = v;
            }
            if let Some(v) = acoustic_dim {
                cfg.acoustic_dim = v;
            }
            let out = g.output.clone().unwrap_or_else(|| g.data_dir.clone());
            let (ds, features) = SynthModel::new(cfg.clone())?.generate()?;
            save_dataset(&ds, &out)?;
            save_features(&features, &out.join("features"))?;
            std::fs::write(out.join("synth.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
            summary(
                g,
                serde_json::json!({
                    "schema_version": SCHEMA_VERSION,
                    "path": out.display().to_string(),
                    "utterances": ds.len(),
                    "speakers": ds.speakers(),
                    "seed": g.seed,
                }),
            )
        }
        Command::Record {
            speaker,
            anchor,
            loss_rate,
            repetitions,
            packets,
        } => {
            let model = SynthModel::new(SynthConfig {
                seed: g.seed,
                ..SynthConfig::default()
            })?;
            let mut script = SessionScript::default();
            if let Some(r) = repetitions {
                script.repetitions = r;
            }
            script.validate()?;
            let session = SimulatedSession {
                model: &model,
                script: script.clone(),
                speaker,
                seed: g.seed,
            };
            let (channels, triggers) = session.render_all();
            let dev = DeviceConfig {
                loss_rate,
                seed: g.seed,
                ..DeviceConfig::default()
            };
            let pk = simulate_device(&channels, &triggers, &dev)?;
            if let Some(p) = &packets {
                write_packet_vectors(p, &pk)?;
            }
            let opts = SessionOptions {
                anchor: anchor.into(),
                ..SessionOptions::default()
            };
            let out = run_session(&script, &pk, speaker, &opts)?;
            let dir = g.output.clone().unwrap_or_else(|| g.data_dir.clone());
            save_dataset(&out.dataset, &dir)?;
            summary(
                g,
                serde_json::json!({
                    "schema_version": SCHEMA_VERSION,
                    "path": dir.display().to_string(),
                    "utterances": out.dataset.len(),
                    "packets": pk.len(),
                    "stats": out.stats,
                }),
            )
        }
        Command::Serve {
            port,
            device,
            packets,
            speed,
            loss_rate,
        } => {
            let kind = match device {
                DeviceArg::Sim => emgdeck_service::DeviceKind::Simulated {
                    synth: SynthConfig {
                        seed: g.seed,
                        ..SynthConfig::default()
                    },
                    device: DeviceConfig {
                        loss_rate,
                        seed: g.seed,
                        ..DeviceConfig::default()
                    },
                },
                DeviceArg::File => match packets {
                    Some(p) => emgdeck_service::DeviceKind::File(p),
                    None => return Err(Failure::Data(anyhow::anyhow!("--device file needs --packets PATH"))),
                },
            };
            let engine = emgdeck_service::Engine::new(emgdeck_service::EngineConfig {
                device: kind,
                output_dir: g.output.clone().unwrap_or_else(|| PathBuf::from("sessions")),
                speed,
                ..Default::default()
            })?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let handle = emgdeck_service::serve(&format!("127.0.0.1:{port}"), engine).await?;
                eprintln!("listening on ws://{}", handle.addr);
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => handle.shutdown().await,
                }
                Ok::<_, std::io::Error>(())
            })?;
            Ok(())
        }
        Command::Features => {
            let ds = load(g)?;
            let rows: Vec<(String, Word, u8, StatsFeatureVector)> = ds
                .utterances
                .iter()
                .map(|u| Ok((u.id.clone(), u.word, u.speaker, extract_stats(u)?)))
                .collect::<Result<_, emgdeck::dsp::DspError>>()?;
            let names = StatsFeatureVector::names(ds.channel_count());
            let json = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "columns": names,
                "rows": rows.iter().map(|(id, w, s, v)| serde_json::json!({
                    "id": id, "word": w, "speaker": s, "values": v.values,
                })).collect::<Vec<_>>(),
            });
            let csv = || {
                let mut s = format!("id,word,speaker,{}\n", names.join(","));
                for (id, w, sp, v) in &rows {
                    let vals: Vec<String> = v.values.iter().map(|x| x.to_string()).collect();
                    s.push_str(&format!("{id},{},{sp},{}\n", w.text(), vals.join(",")));
                }
                s
            };
            emit(g, &json, csv, csv)
        }
        Command::Spectrogram { nfft, log, channels } => {
            let ds = load(g)?.select_channels(&channels.indices())?;
            let cfg = SpectrogramConfig {
                nfft,
                ..SpectrogramConfig::default()
            };
            cfg.validate()?;
            let out = g.output.clone().unwrap_or_else(|| g.data_dir.join("spectrograms"));
            let mut tracks = std::collections::BTreeMap::new();
            let mut shape = (0, 0);
            for u in &ds.utterances {
                let s = spectrogram(u, &cfg)?;
                let m = flatten_spectrogram(&s, log).transpose();
                shape = (m.rows(), m.cols());
                let frames = m.as_slice().iter().map(|v| *v as f32).collect();
                let rate = u.sample_rate_hz as f64 / cfg.hop() as f64;
                tracks.insert(u.id.clone(), AcousticFeatureTrack::new(u.id.clone(), rate, m.cols(), frames)?);
            }
            save_features(
                &AcousticFeatureSet {
                    tracks,
                    source: AcousticSource::External,
                },
                &out,
            )?;
            summary(
                &Global { output: None, ..g.clone() },
                serde_json::json!({
                    "schema_version": SCHEMA_VERSION,
                    "path": out.display().to_string(),
                    "utterances": ds.len(),
                    "frames": shape.0,
                    "dims": shape.1,
                    "nfft": nfft,
                    "log": log,
                }),
            )
        }
        Command::Classify {
            channels,
            forest,
            splits,
            permute,
            assert_min_accuracy,
        } => {
            let ds = load(g)?;
            let opts = ClassificationOptions {
                n_splits: splits,
                seed: g.seed,
                permute_labels: permute,
                ..ClassificationOptions::default()
            };
            let r = run_classification(&ds, &channels, &forest.config(g.seed), &opts)?;
            emit(g, &r, || r.to_text(), || r.to_csv())?;
            if let Some(min) = assert_min_accuracy {
                if !(r.mean >= min) {
                    return Err(Failure::Assertion(format!("mean accuracy {:.4} < {min}", r.mean)));
                }
            }
            Ok(())
        }
        Command::Ablate { policy, forest, splits } => {
            let ds = load(g)?;
            let opts = ClassificationOptions {
                n_splits: splits,
                seed: g.seed,
                ..ClassificationOptions::default()
            };
            let r = run_ablation(&ds, policy, &forest.config(g.seed), &opts)?;
            emit(g, &r, || r.to_text(), || r.to_csv())
        }
        Command::Confusion { channels, forest } => {
            let ds = load(g)?;
            let r = run_one_shot_confusion(&ds, &channels, &forest.config(g.seed), g.seed)?;
            emit(g, &r, || r.to_text(), || r.confusion.to_csv())
        }
        Command::Correlate {
            features,
            channels,
            nfft,
            threshold,
            control,
            assert_min_fraction,
        } => {
            let ds = load(g)?;
            let fdir = features.unwrap_or_else(|| g.data_dir.join("features"));
            let acoustics = load_features(
                &fdir,
                LoadOptions {
                    allow_nonstandard_dim: true,
                },
            )
            .map_err(|e| Failure::Data(anyhow::anyhow!("{}: {e}", fdir.display())))?;
            let cfg = CorrelationConfig {
                spectrogram: SpectrogramConfig {
                    nfft,
                    ..SpectrogramConfig::correlation()
                },
                channels,
                threshold,
                control_seed: control.then_some(g.seed),
                ..CorrelationConfig::default()
            };
            let r = run_correlation(&ds, &acoustics, &cfg)?;
            emit(g, &r, || r.to_text(), || r.to_csv())?;
            if let Some(min) = assert_min_fraction {
                if !(r.fraction_ge_threshold >= min) {
                    return Err(Failure::Assertion(format!(
                        "fraction {:.4} < {min}",
                        r.fraction_ge_threshold
                    )));
                }
            }
            Ok(())
        }
        Command::Packets { op } => packets(g, op),
    }
}

fn random_packet(rng: &mut impl Rng, channels: u8, sequence: u32) -> DevicePacket {
    let spc = rng.random_range(1..=32u8);
    DevicePacket {
        channel_count: channels,
        samples_per_channel: spc,
        sequence,
        timestamp_us: rng.random(),
        trigger: rng.random_bool(0.1),
        codes: (0..channels as usize * spc as usize)
            .map(|_| rng.random_range(emgdeck::dataset::ADC_MIN..=emgdeck::dataset::ADC_MAX))
            .collect(),
    }
}

fn packets(g: &Global, op: PacketOp) -> Outcome {
    let mut rng = emgdeck::seed::rng(g.seed);
    match op {
        PacketOp::Encode { count, channels } => {
            if channels == 0 {
                return Err(Failure::Data(anyhow::anyhow!("--channels must be at least 1")));
            }
            let pk: Vec<DevicePacket> = (0..count).map(|i| random_packet(&mut rng, channels, i as u32)).collect();
            let out = g.output.clone().unwrap_or_else(|| PathBuf::from("packets.jsonl"));
            write_packet_vectors(&out, &pk)?;
            summary(
                &Global { output: None, ..g.clone() },
                serde_json::json!({"schema_version": SCHEMA_VERSION, "path": out.display().to_string(), "packets": count}),
            )
        }
        PacketOp::Decode { hex } => {
            let decoded: Vec<DevicePacket> = if hex.is_empty() {
                read_vectors(&g.data_dir)?
            } else {
                hex.iter()
                    .map(|h| {
                        let bytes = hex::decode(h.trim()).map_err(|e| anyhow::anyhow!("{h}: {e}"))?;
                        decode_packet(&bytes).map_err(|e| anyhow::anyhow!("{h}: {e}"))
                    })
                    .collect::<Result<_, anyhow::Error>>()?
            };
            let text = || {
                decoded
                    .iter()
                    .map(|p| {
                        format!(
                            "seq {} t {}us {}x{}{}\n",
                            p.sequence,
                            p.timestamp_us,
                            p.channel_count,
                            p.samples_per_channel,
                            if p.trigger { " trigger" } else { "" }
                        )
                    })
                    .collect()
            };
            emit(g, &decoded, text, text)
        }
        PacketOp::Fuzz { count } => {
            let mut failures = 0usize;
            let mut flips = 0usize;
            for i in 0..count {
                let channels = rng.random_range(1..=16u8);
                let p = random_packet(&mut rng, channels, i as u32);
                let bytes = encode_packet(&p)?;
                if decode_packet(&bytes).as_ref() != Ok(&p) {
                    failures += 1;
                }
                let bit = rng.random_range(0..bytes.len() * 8);
                let mut bad = bytes.clone();
                bad[bit / 8] ^= 1 << (bit % 8);
                flips += 1;
                if decode_packet(&bad).is_ok() {
                    failures += 1;
                }
            }
            summary(
                g,
                serde_json::json!({
                    "schema_version": SCHEMA_VERSION,
                    "round_trips": count,
                    "bit_flips": flips,
                    "failures": failures,
                    "magic": format!("{PACKET_MAGIC:#06x}"),
                }),
            )?;
            if failures > 0 {
                return Err(Failure::Assertion(format!("{failures} codec failures")));
            }
            Ok(())
        }
    }
}

fn read_vectors(path: &Path) -> Result<Vec<DevicePacket>, anyhow::Error> {
    Ok(read_packet_vectors(path)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
        .into_iter()
        .map(|v| v.packet)
        .collect())
}
