//! WebSocket transport around [`Engine`]. One task owns the engine; each
//! connection forwards its text frames to it and receives every broadcast.

use crate::engine::{Engine, Frame};
use crate::protocol::parse_client;
use futures_util::{SinkExt, StreamExt};
use std::net::SocketAddr;
use std::time::Duration;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio_tungstenite::tungstenite::Message;

type Request = (String, oneshot::Sender<Option<Frame>>);

pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }

    /// Runs until the task ends (it only ends on shutdown).
    pub async fn wait(self) {
        let _ = self.task.await;
    }
}

fn to_message(f: Frame) -> Message {
    match f {
        Frame::Text(t) => Message::Text(t),
        Frame::Binary(b) => Message::Binary(b),
    }
}

/// Binds `addr` and starts serving. Use port 0 to pick a free port.
pub async fn serve(addr: &str, engine: Engine) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (req_tx, req_rx) = mpsc::channel::<Request>(64);
    let (bc_tx, _) = broadcast::channel::<Frame>(16384);
    let (sd_tx, mut sd_rx) = oneshot::channel();

    let tick_ms = engine.tick_ms();
    let engine_task = tokio::spawn(run_engine(engine, req_rx, bc_tx.clone(), tick_ms));
    let task = tokio::spawn(async move {
        loop {
            tokio::select! {
                _ = &mut sd_rx => break,
                acc = listener.accept() => match acc {
                    Ok((stream, peer)) => {
                        log::info!("client connected from {peer}");
                        tokio::spawn(connection(stream, req_tx.clone(), bc_tx.subscribe()));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                },
            }
        }
        engine_task.abort();
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(sd_tx),
        task,
    })
}

async fn run_engine(
    mut engine: Engine,
    mut requests: mpsc::Receiver<Request>,
    broadcast: broadcast::Sender<Frame>,
    tick_ms: u64,
) {
    let mut ticker = tokio::time::interval(Duration::from_millis(tick_ms.max(1)));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            req = requests.recv() => {
                let Some((text, reply)) = req else { break };
                let outcome = parse_client(&text).and_then(|m| engine.handle(m));
                match outcome {
                    Ok(frames) => {
                        for f in frames {
                            let _ = broadcast.send(f);
                        }
                        let _ = reply.send(None);
                    }
                    Err(e) => {
                        let _ = reply.send(Some(e.into()));
                    }
                }
            }
            _ = ticker.tick() => {
                for f in engine.tick() {
                    let _ = broadcast.send(f);
                }
            }
        }
    }
}

async fn connection(stream: TcpStream, requests: mpsc::Sender<Request>, mut frames: broadcast::Receiver<Frame>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    loop {
        tokio::select! {
            incoming = source.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => "<binary>".to_string(),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let (tx, rx) = oneshot::channel();
                if requests.send((text, tx)).await.is_err() {
                    break;
                }
                if let Ok(Some(reply)) = rx.await {
                    if sink.send(to_message(reply)).await.is_err() {
                        break;
                    }
                }
            }
            f = frames.recv() => match f {
                Ok(f) => {
                    if sink.send(to_message(f)).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::warn!("client lagged, dropped {n} frames"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
        }
    }
}
