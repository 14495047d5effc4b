use std::path::Path;
use std::process::{Command, Output};

fn emgdeck(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emgdeck"))
        .current_dir(dir)
        .env_remove("EMGDECK_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn small_corpus(dir: &Path) {
    ok(&emgdeck(
        dir,
        &["synth", "--seed", "7", "-o", "d/", "--utterances-per-cell", "5", "--acoustic-dim", "16"],
    ));
}

#[test]
fn synth_then_classify_prints_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    small_corpus(tmp.path());
    let r = ok(&emgdeck(
        tmp.path(),
        &["classify", "-d", "d/", "--channels", "neck10", "--trees", "10", "--splits", "2"],
    ));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["channel_set"], "neck10");
    assert_eq!(r["per_split_accuracy"].as_array().unwrap().len(), 2);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    small_corpus(tmp.path());
    for (name, args) in [
        ("cls", vec!["classify", "-d", "d", "--trees", "10", "--splits", "2"]),
        ("cor", vec!["correlate", "-d", "d", "--control"]),
    ] {
        let mut outs = Vec::new();
        for run in 0..2 {
            let file = format!("{name}{run}.json");
            let mut a = args.clone();
            a.extend(["-o", &file]);
            let out = emgdeck(tmp.path(), &a);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            outs.push(std::fs::read(tmp.path().join(&file)).unwrap());
        }
        assert_eq!(outs[0], outs[1], "{name}");
    }
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("cor0.json")).unwrap()).unwrap();
    assert!(r["control_fraction"].is_number());
    assert_eq!(r["n_dims"], 1290);
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = emgdeck(tmp.path(), &["classify", "--channels", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--channels"));
    let out = emgdeck(tmp.path(), &["nosuch"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn data_and_assertion_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = emgdeck(tmp.path(), &["classify", "-d", "missing"]);
    assert_eq!(out.status.code(), Some(2));
    small_corpus(tmp.path());
    let out = emgdeck(
        tmp.path(),
        &["classify", "-d", "d", "--trees", "5", "--splits", "2", "--assert-min-accuracy", "1.01"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn seed_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_emgdeck"))
        .current_dir(tmp.path())
        .env("EMGDECK_SEED", "99")
        .args(["packets", "fuzz", "--count", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = emgdeck(tmp.path(), &["synth", "-o", "x", "--utterances-per-cell", "1", "--acoustic-dim", "4"]);
    assert_eq!(ok(&out)["seed"], 2024);
}

#[test]
fn record_and_packet_tools() {
    let tmp = tempfile::tempdir().unwrap();
    let r = ok(&emgdeck(
        tmp.path(),
        &["record", "-o", "rec", "--repetitions", "1", "--loss-rate", "0.05", "--packets", "p.jsonl"],
    ));
    assert_eq!(r["utterances"], 11);
    assert_eq!(r["stats"]["crc_failures"], 0);
    let decoded = ok(&emgdeck(tmp.path(), &["packets", "decode", "-d", "p.jsonl"]));
    assert_eq!(decoded.as_array().unwrap().len() as u64, r["packets"].as_u64().unwrap());
    let line = std::fs::read_to_string(tmp.path().join("p.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    let one = ok(&emgdeck(tmp.path(), &["packets", "decode", first["hex"].as_str().unwrap()]));
    assert_eq!(one[0]["sequence"], 0);
    assert_eq!(one[0]["trigger"], true);
    let out = emgdeck(tmp.path(), &["packets", "decode", "5aa5"]);
    assert_eq!(out.status.code(), Some(2));
    let f = ok(&emgdeck(tmp.path(), &["packets", "fuzz", "--count", "500"]));
    assert_eq!(f["failures"], 0);
}

#[test]
fn features_and_spectrogram() {
    let tmp = tempfile::tempdir().unwrap();
    small_corpus(tmp.path());
    let out = emgdeck(tmp.path(), &["features", "-d", "d", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 111);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 3 + 13 * 20);
    let s = ok(&emgdeck(tmp.path(), &["spectrogram", "-d", "d", "--nfft", "256", "--channels", "neck10", "-o", "sp"]));
    assert_eq!(s["frames"], 29);
    assert_eq!(s["dims"], 1290);
    assert!(tmp.path().join("sp/features.jsonl").exists());
}
