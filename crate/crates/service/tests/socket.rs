use emgdeck::device::{decode_packet, DeviceConfig};
use emgdeck::synth::SynthConfig;
use emgdeck_service::{serve, DeviceKind, Engine, EngineConfig};
use futures_util::{SinkExt, StreamExt};
use std::time::Duration;
use tokio_tungstenite::tungstenite::Message;

fn engine(dir: &std::path::Path, speed: f64) -> Engine {
    Engine::new(EngineConfig {
        device: DeviceKind::Simulated {
            synth: SynthConfig {
                acoustic_dim: 4,
                ..SynthConfig::default()
            },
            device: DeviceConfig::default(),
        },
        output_dir: dir.to_path_buf(),
        speed,
        tick_ms: 20,
        sample_rate_hz: 1000,
    })
    .unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn full_default_session_over_websocket() {
    let dir = tempfile::tempdir().unwrap();
    let server = serve("127.0.0.1:0", engine(dir.path(), 300.0)).await.unwrap();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}", server.addr)).await.unwrap();
    ws.send(Message::Text(r#"{"type":"start_session","speaker":1}"#.into())).await.unwrap();

    let mut phases: Vec<(u64, String)> = Vec::new();
    let mut packets = 0usize;
    let mut saved = None;
    let deadline = tokio::time::Instant::now() + Duration::from_secs(300);
    while saved.is_none() {
        let msg = tokio::time::timeout_at(deadline, ws.next()).await.unwrap().unwrap().unwrap();
        match msg {
            Message::Binary(b) => {
                decode_packet(&b).unwrap();
                packets += 1;
            }
            Message::Text(t) => {
                let v: serde_json::Value = serde_json::from_str(&t).unwrap();
                match v["type"].as_str().unwrap() {
                    "prompt" => {
                        let key = (v["prompt_index"].as_u64().unwrap(), v["phase"].as_str().unwrap().to_string());
                        if phases.last() != Some(&key) {
                            phases.push(key);
                        }
                    }
                    "saved" => saved = Some(v),
                    "error" => panic!("{v}"),
                    _ => {}
                }
            }
            _ => {}
        }
    }
    assert!(phases.len() >= 330, "{} phases", phases.len());
    let order = ["wait1", "word", "wait2"];
    for (i, (p, ph)) in phases.iter().enumerate() {
        assert_eq!(*p as usize, i / 3);
        assert_eq!(ph, order[i % 3]);
    }
    assert_eq!(packets, 110 * 9000 / 20);
    assert_eq!(saved.unwrap()["utterances"], 110);
    server.shutdown().await;
}

#[tokio::test]
async fn bad_message_goes_to_sender_and_state_is_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let server = serve("127.0.0.1:0", engine(dir.path(), 1.0)).await.unwrap();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}", server.addr)).await.unwrap();
    ws.send(Message::Text("{nope".into())).await.unwrap();
    let reply = ws.next().await.unwrap().unwrap();
    let v: serde_json::Value = serde_json::from_str(reply.to_text().unwrap()).unwrap();
    assert_eq!(v["type"], "error");
    assert_eq!(v["code"], "bad_message");
    ws.send(Message::Text(r#"{"type":"stop"}"#.into())).await.unwrap();
    let reply = ws.next().await.unwrap().unwrap();
    let v: serde_json::Value = serde_json::from_str(reply.to_text().unwrap()).unwrap();
    assert_eq!(v["state"], "idle");
    server.shutdown().await;
}
