//! Acceptance gate: one PASS/FAIL line per criterion. Run with
//! `cargo test -p emgdeck --test acceptance`.

use emgdeck::dataset::{ChannelSet, Utterance, DEFAULT_VOLTS_PER_LSB};
use emgdeck::device::{decode_packet, encode_packet, reassemble, simulate_device, DeviceConfig, DevicePacket, PacketError};
use emgdeck::dsp::{channel_stats, extract_stats, spectrogram_of_signals, SpectrogramConfig, Stat};
use emgdeck::experiments::{
    run_ablation, run_classification, run_correlation, run_one_shot_confusion, AblationPolicy, ClassificationOptions,
    CorrelationConfig,
};
use emgdeck::learn::{fit_forest, fit_ols, ForestConfig, Ridge};
use emgdeck::matrix::Matrix;
use emgdeck::session::{SessionScript, SimulatedSession};
use emgdeck::synth::{generate_synthetic, SynthConfig, SynthModel};
use emgdeck::word::Word;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn accuracy_floor() -> Check {
    let t = Instant::now();
    let (ds, _) = generate_synthetic(&SynthConfig::default()).map_err(e)?;
    let cfg = ForestConfig::default();
    let opts = ClassificationOptions::default();
    let full = run_classification(&ds, &ChannelSet::Full13, &cfg, &opts).map_err(e)?;
    let neck = run_classification(&ds, &ChannelSet::Neck10, &cfg, &opts).map_err(e)?;
    let perm = run_classification(
        &ds,
        &ChannelSet::Full13,
        &cfg,
        &ClassificationOptions {
            permute_labels: true,
            ..opts
        },
    )
    .map_err(e)?;
    let elapsed = t.elapsed();
    let detail = format!(
        "full13 {:.4} (>= 0.90), neck10 {:.4} (>= 0.85), permuted {:.4} (0.09 +- 0.04), {:.1}s (< 120s)",
        full.mean,
        neck.mean,
        perm.mean,
        elapsed.as_secs_f64()
    );
    ensure(full.mean >= 0.90, detail.clone())?;
    ensure(neck.mean >= 0.85, detail.clone())?;
    ensure((perm.mean - 0.09).abs() <= 0.04, detail.clone())?;
    ensure(elapsed < Duration::from_secs(120), detail.clone())?;
    Ok(detail)
}

fn ablation_shape() -> Check {
    let (ds, _) = generate_synthetic(&SynthConfig::default()).map_err(e)?;
    let cfg = ForestConfig::default();
    let opts = ClassificationOptions::default();
    let abl = run_ablation(&ds, AblationPolicy::CenterOut, &cfg, &opts).map_err(e)?;
    let neck = run_classification(&ds, &ChannelSet::Neck10, &cfg, &opts).map_err(e)?;
    let k2 = abl.mean_at(2).ok_or("no k=2")?;
    let k10 = abl.per_k.get(&10).ok_or("no k=10")?;
    let detail = format!("k2 {:.4}, k10 {:.4}, gain {:.4} (>= 0.05)", k2, k10.mean, k10.mean - k2);
    ensure(k10.mean - k2 >= 0.05, detail.clone())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(
        bits(&k10.per_split_accuracy) == bits(&neck.per_split_accuracy) && k10.confusion == neck.confusion,
        format!("{detail}; k=10 differs from neck10"),
    )?;
    Ok(format!("{detail}; k=10 bitwise equal to neck10"))
}

fn one_shot_arithmetic() -> Check {
    let (ds, _) = generate_synthetic(&SynthConfig::default()).map_err(e)?;
    let r = run_one_shot_confusion(&ds, &ChannelSet::Full13, &ForestConfig::default(), 2024).map_err(e)?;
    for d in &r.directions {
        ensure(
            d.n_train == 121 && d.n_test == 99,
            format!("direction {}->{}: train {} test {}", d.train_speaker, d.test_speaker, d.n_train, d.n_test),
        )?;
    }
    ensure(r.directions.len() == 2, "expected two directions")?;
    let rows = r.confusion.row_sums();
    ensure(r.confusion.total() == 198, format!("total {}", r.confusion.total()))?;
    ensure(rows.iter().all(|&s| s == 18), format!("row sums {rows:?}"))?;
    Ok(format!("train 121 / test 99 per direction, total 198, all 11 row sums 18, accuracy {:.4}", r.confusion.accuracy()))
}

fn correlation_oracle() -> Check {
    let t = Instant::now();
    let (ds, ac) = generate_synthetic(&SynthConfig {
        noise_std: 0.0,
        ..SynthConfig::default()
    })
    .map_err(e)?;
    let r = run_correlation(
        &ds,
        &ac,
        &CorrelationConfig {
            control_seed: Some(2024),
            ..CorrelationConfig::default()
        },
    )
    .map_err(e)?;
    let elapsed = t.elapsed();
    let control = r.control_fraction.ok_or("control not run")?;
    let detail = format!(
        "{} dims (nfft {}), fraction r>=0.5 {:.4} (>= 0.9), uniform control {:.4} (<= 0.02), {:.1}s (< 300s)",
        r.n_dims,
        r.nfft,
        r.fraction_ge_threshold,
        control,
        elapsed.as_secs_f64()
    );
    ensure(r.n_dims == 1290 && r.nfft == 256, detail.clone())?;
    ensure(r.fraction_ge_threshold >= 0.9, detail.clone())?;
    ensure(control <= 0.02, detail.clone())?;
    ensure(elapsed < Duration::from_secs(300), detail.clone())?;
    Ok(detail)
}

fn dsp_oracles() -> Check {
    let stat = |v: &[f64; 20], s: Stat| v[s as usize];
    let c = channel_stats(&[5.0; 1500], 1000.0).map_err(e)?;
    ensure(stat(&c, Stat::Max) == 5.0 && stat(&c, Stat::Min) == 5.0, "constant max/min")?;
    for s in [
        Stat::Range,
        Stat::Std,
        Stat::Var,
        Stat::Skewness,
        Stat::Kurtosis,
        Stat::NPeaks,
        Stat::Zcr,
        Stat::RiseTime,
        Stat::FallTime,
    ] {
        ensure(stat(&c, s) == 0.0, format!("constant {s:?} = {}", stat(&c, s)))?;
    }

    let ramp = Utterance::new("ramp", 1, Word::Heed, 1000, DEFAULT_VOLTS_PER_LSB, vec![(0..1000).collect()]).map_err(e)?;
    let f = extract_stats(&ramp).map_err(e)?;
    ensure(
        (f.get(0, Stat::MeanAbsSlope) - DEFAULT_VOLTS_PER_LSB).abs() <= 1e-12 * DEFAULT_VOLTS_PER_LSB,
        "ramp mean_abs_slope",
    )?;
    ensure(
        f.get(0, Stat::RiseTime) == 1.0
            && f.get(0, Stat::FallTime) == 0.0
            && f.get(0, Stat::MaxPosition) == 1.0
            && f.get(0, Stat::MinPosition) == 0.0,
        "ramp rise/fall/positions",
    )?;

    // A phase offset keeps samples off the sine's zeros, so all 20 crossings
    // in one second are observable.
    let sine: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 10.0 * i as f64 / 1000.0 + 0.3).sin()).collect();
    let s = channel_stats(&sine, 1000.0).map_err(e)?;
    ensure(stat(&s, Stat::Zcr) == 20.0, format!("zcr {}", stat(&s, Stat::Zcr)))?;
    ensure(stat(&s, Stat::Mcr) == 20.0, format!("mcr {}", stat(&s, Stat::Mcr)))?;
    ensure((stat(&s, Stat::QuadMean) - 0.5f64.sqrt()).abs() <= 1e-3, "sine quad_mean")?;

    let cfg = SpectrogramConfig::correlation();
    let tone: Vec<f64> = (0..1500).map(|i| (2.0 * PI * 125.0 * i as f64 / 1000.0).sin()).collect();
    let sp = spectrogram_of_signals(&[tone], 1000.0, &cfg).map_err(e)?;
    ensure(sp.n_frames == 29, format!("{} frames", sp.n_frames))?;
    ensure(SpectrogramConfig::default().n_frames(1500) == 29, "nfft 128 frame count")?;
    for fr in 0..sp.n_frames {
        ensure(sp.peak_bin(0, fr) == 32, format!("frame {fr} peaks at {}", sp.peak_bin(0, fr)))?;
    }
    Ok("constant/ramp/sine stats exact, 29 frames, 125 Hz peaks at bin 32 in all frames".into())
}

fn random_packet(rng: &mut ChaCha8Rng) -> DevicePacket {
    let cc = rng.random_range(1..=16u8);
    let spc = rng.random_range(1..=40u8);
    DevicePacket {
        channel_count: cc,
        samples_per_channel: spc,
        sequence: rng.random(),
        timestamp_us: rng.random(),
        trigger: rng.random(),
        codes: (0..cc as usize * spc as usize).map(|_| rng.random_range(-16384..=16383)).collect(),
    }
}

fn codec_conformance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100_000 {
        let p = random_packet(&mut rng);
        let bytes = encode_packet(&p).map_err(e)?;
        ensure(decode_packet(&bytes).as_ref() == Ok(&p), format!("round trip failed on packet {i}"))?;
    }

    let small = DevicePacket {
        channel_count: 1,
        samples_per_channel: 1,
        sequence: 0,
        timestamp_us: 0,
        trigger: true,
        codes: vec![0],
    };
    let bytes = encode_packet(&small).map_err(e)?;
    ensure(bytes.len() == 21, format!("small packet is {} bytes", bytes.len()))?;
    for bit in 0..bytes.len() * 8 {
        let mut b = bytes.clone();
        b[bit / 8] ^= 1 << (bit % 8);
        match decode_packet(&b) {
            Err(PacketError::BadCrc { .. }) | Err(PacketError::BadMagic(_)) => {}
            other => return Err(format!("bit {bit}: {other:?}")),
        }
    }

    let model = SynthModel::new(SynthConfig {
        acoustic_dim: 4,
        ..SynthConfig::default()
    })
    .map_err(e)?;
    let session = SimulatedSession {
        model: &model,
        script: SessionScript {
            prompts: vec![Word::Aba],
            repetitions: 1,
            ..SessionScript::default()
        },
        speaker: 1,
        seed: 2024,
    };
    let (channels, triggers) = session.render_all();
    ensure(channels[0].len() == 9000, "session is not 9 s")?;
    let packets = simulate_device(&channels, &triggers, &DeviceConfig::default()).map_err(e)?;
    let back = reassemble(&packets).map_err(e)?;
    ensure(back.channels == channels, "reassembled samples differ")?;
    let idx: Vec<u64> = back.triggers.iter().map(|t| t.sample_index).collect();
    ensure(idx == triggers, format!("triggers {idx:?} vs {triggers:?}"))?;
    ensure(back.stats.packets_lost == 0 && back.stats.crc_failures == 0, "lossless stats")?;
    Ok(format!(
        "1e5 round trips, {} single-bit flips detected, 9 s session ({} packets) reassembled exactly",
        bytes.len() * 8,
        packets.len()
    ))
}

/// Normal equations `[1|X]ᵀ[1|X] β = [1|X]ᵀ y` solved by Gaussian
/// elimination with partial pivoting.
fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yv) in x.iter().zip(y) {
        let z: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for i in 0..p {
            for j in 0..p {
                a[i][j] += z[i] * z[j];
            }
            a[i][p] += z[i] * yv;
        }
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in col + 1..p {
            let f = a[r][col] / a[col][col];
            for c in col..=p {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for r in (0..p).rev() {
        let s: f64 = (r + 1..p).map(|c| a[r][c] * beta[c]).sum();
        beta[r] = (a[r][p] - s) / a[r][r];
    }
    beta
}

fn learning_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let d = rng.random_range(1..=50usize);
        let n = rng.random_range(d + 5..=200usize);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = fit_ols(&Matrix::from_rows(&x), &y, Ridge::Fixed(0.0)).map_err(e)?;
        let beta = normal_equations(&x, &y);
        let got: Vec<f64> = std::iter::once(m.intercept).chain(m.weights.iter().copied()).collect();
        let num: f64 = got.iter().zip(&beta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    ensure(worst <= 1e-6, format!("OLS relative error {worst:e}"))?;

    let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
    let y = [0, 1, 1, 0];
    let cfg = ForestConfig {
        n_trees: 10,
        max_depth: 2,
        mtry: Some(2),
        bootstrap: false,
        ..ForestConfig::default()
    };
    let f = fit_forest(&x, &y, &cfg).map_err(e)?;
    ensure(f.predict_labels(&x).map_err(e)? == y, "XOR not fit")?;

    let pts: Vec<[f64; 3]> = (0..120).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let labels: Vec<usize> = pts.iter().map(|p| (p[0] * 3.0) as usize).collect();
    let x = Matrix::from_rows(&pts);
    let cfg = ForestConfig {
        n_trees: 25,
        seed: 7,
        ..ForestConfig::default()
    };
    let a = fit_forest(&x, &labels, &cfg).map_err(e)?;
    let b = fit_forest(&x, &labels, &cfg).map_err(e)?;
    ensure(a.to_json() == b.to_json(), "forest not seed-deterministic")?;
    Ok(format!("OLS max relative error {worst:.2e} (<= 1e-6), XOR fit exactly, forest reproducible"))
}

fn determinism() -> Check {
    let run = || -> Result<(String, String), String> {
        let (ds, ac) = generate_synthetic(&SynthConfig::default()).map_err(e)?;
        let cls = run_classification(&ds, &ChannelSet::Full13, &ForestConfig::default(), &ClassificationOptions::default())
            .map_err(e)?;
        let cor = run_correlation(&ds, &ac, &CorrelationConfig::default()).map_err(e)?;
        Ok((
            serde_json::to_string_pretty(&cls).map_err(e)?,
            serde_json::to_string_pretty(&cor).map_err(e)?,
        ))
    };
    let a = run()?;
    let b = run()?;
    ensure(a.0 == b.0, "classification reports differ")?;
    ensure(a.1 == b.1, "correlation reports differ")?;
    Ok(format!("classify {} bytes and correlate {} bytes identical across runs", a.0.len(), a.1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("pipeline accuracy floor", accuracy_floor),
        ("ablation shape", ablation_shape),
        ("one-shot protocol arithmetic", one_shot_arithmetic),
        ("correlation oracle", correlation_oracle),
        ("dsp oracles", dsp_oracles),
        ("codec conformance", codec_conformance),
        ("learning oracles", learning_oracles),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
