//! JSON control messages exchanged over the socket's text frames. Binary
//! frames carry raw device packets and are not described here.

use emgdeck::dataset::AnchorPolicy;
use emgdeck::device::StreamStats;
use emgdeck::session::SessionScript;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    StartSession {
        #[serde(default)]
        script: SessionScript,
        speaker: u8,
        #[serde(default)]
        anchor: AnchorPolicy,
    },
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    Busy,
    DeviceEnded,
    SessionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Prompt {
        /// The prompted word during the word phase, "wait" otherwise.
        text: String,
        phase: String,
        remaining_ms: u64,
        prompt_index: usize,
        prompt_count: usize,
    },
    Stats(StreamStats),
    State {
        state: String,
    },
    Saved {
        path: String,
        utterances: usize,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, ServerMessage> {
    serde_json::from_str(text).map_err(|e| ServerMessage::error(ErrorCode::BadMessage, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use emgdeck::word::Word;

    #[test]
    fn client_messages_parse() {
        let m = parse_client(r#"{"type":"start_session","speaker":2}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::StartSession {
                script: SessionScript::default(),
                speaker: 2,
                anchor: AnchorPolicy::Center
            }
        );
        let m = parse_client(r#"{"type":"start_session","speaker":1,"script":{"prompts":["aba"],"repetitions":1},"anchor":"energy"}"#)
            .unwrap();
        match m {
            ClientMessage::StartSession { script, anchor, .. } => {
                assert_eq!(script.prompts, vec![Word::Aba]);
                assert_eq!(script.word_s, 3.0);
                assert_eq!(anchor, AnchorPolicy::Energy);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_client(r#"{"type":"stop"}"#).unwrap(), ClientMessage::Stop);
    }

    #[test]
    fn malformed_is_bad_message() {
        for bad in ["", "{", r#"{"type":"dance"}"#, r#"{"type":"start_session"}"#, r#"[1,2]"#] {
            match parse_client(bad) {
                Err(ServerMessage::Error { code: ErrorCode::BadMessage, .. }) => {}
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn server_message_shapes() {
        let p = ServerMessage::Prompt {
            text: "wait".into(),
            phase: "wait1".into(),
            remaining_ms: 2500,
            prompt_index: 0,
            prompt_count: 110,
        };
        assert_eq!(
            p.to_json(),
            r#"{"type":"prompt","text":"wait","phase":"wait1","remaining_ms":2500,"prompt_index":0,"prompt_count":110}"#
        );
        let e = ServerMessage::error(ErrorCode::Busy, "x");
        assert_eq!(e.to_json(), r#"{"type":"error","code":"busy","message":"x"}"#);
        let s = ServerMessage::Stats(StreamStats { packets_received: 3, packets_lost: 1, crc_failures: 0 });
        assert_eq!(s.to_json(), r#"{"type":"stats","packets_received":3,"packets_lost":1,"crc_failures":0}"#);
    }
}
