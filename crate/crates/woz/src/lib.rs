//! Wizard-of-oz and annotation service.
//!
//! A session either runs a live WOZ trial, where wizard INTERRUPT commands
//! become the robot's policy signals, or replays a recorded detection log
//! for moment-by-moment annotation. Clients watch schematic scene
//! snapshots over a websocket; snapshots never include the participant's
//! activity or label. See `docs/protocol.md` for the wire format.

pub mod export;
pub mod protocol;
pub mod server;
pub mod session;

pub use export::{agreement_report, export_annotations, AgreementReport, AnnotationExport, ExportError};
pub use protocol::{Envelope, PROTOCOL_VERSION};
pub use server::{bind, serve, CreateSession, Service, ServiceConfig};
pub use session::{DecisionKind, DecisionRecord, Mode, Replay, SessionCore, SessionInfo};

use interrupt_engine::sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid service configuration: {0}")]
    Config(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Export(#[from] ExportError),
}
