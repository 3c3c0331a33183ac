//! Websocket message schema. Every message is one JSON text frame:
//!
//! ```json
//! {"version": 1, "type": "snapshot", "session": "s1", "t_scene": 12.5, "payload": {...}}
//! ```
//!
//! `t_scene` is always scene time. On commands it is the scene time of the
//! snapshot the decision was made on.

use interrupt_engine::sim::SceneSnapshot;
use serde::{Deserialize, Serialize};

use crate::session::{Mode, SessionInfo};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub version: u32,
    pub session: String,
    pub t_scene: f64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Body {
    /// Server: sent once on connect.
    Welcome(SessionInfo),
    /// Server: scene state at one tick.
    Snapshot(SceneSnapshot),
    /// Server: reply to a command from this client.
    Ack(Ack),
    /// Server: a rejected command or malformed message.
    Error(ErrorPayload),
    /// Server: the stream has ended or the session was closed.
    Ended(Ended),
    /// Client (WOZ_LIVE): interrupt now.
    Interrupt(AnnotatorRef),
    /// Client (ANNOTATE_REPLAY): the annotator's state toggled to `value`.
    Label(LabelCommand),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorRef {
    pub annotator_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCommand {
    pub annotator_id: String,
    pub value: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    /// First interrupt of the robot entry; the robot will approach.
    Latched,
    /// Interrupt after the entry already latched or decided; logged only.
    Redundant,
    /// Label recorded.
    Recorded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub command: String,
    pub status: AckStatus,
    /// Robot entry the interrupt applied to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<usize>,
    /// Index in the session decision log.
    pub decision: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    Version,
    WrongSession,
    WrongMode,
    FutureTime,
    OutOfOrder,
    InvalidLabel,
    StaleSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    StreamEnd,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ended {
    pub reason: EndReason,
    pub mode: Mode,
}

impl Envelope {
    pub fn new(session: &str, t_scene: f64, body: Body) -> Self {
        Self { version: PROTOCOL_VERSION, session: session.to_string(), t_scene, body }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("envelopes serialize")
    }

    /// Parses a frame; a version other than [`PROTOCOL_VERSION`] is an
    /// error even if the rest parses.
    pub fn parse(text: &str) -> Result<Self, ErrorPayload> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ErrorPayload { code: ErrorCode::BadMessage, message: e.to_string() })?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
            other => {
                return Err(ErrorPayload {
                    code: ErrorCode::Version,
                    message: format!("expected protocol version {PROTOCOL_VERSION}, got {other:?}"),
                })
            }
        }
        serde_json::from_value(value).map_err(|e| ErrorPayload { code: ErrorCode::BadMessage, message: e.to_string() })
    }
}
