//! Per-session state, independent of transport. The service drives it one
//! tick at a time and feeds it commands in arrival order.

use std::collections::HashMap;
use std::sync::Arc;

use interrupt_engine::features::{fuse_window, FusionConfig};
use interrupt_engine::policy::SignalAck;
use interrupt_engine::scene::DetectionRecord;
use interrupt_engine::sim::{SceneSnapshot, TrialLog, TrialSim};
use interrupt_engine::TICK_SECONDS;
use serde::{Deserialize, Serialize};

use crate::protocol::{Ack, AckStatus, Body, ErrorCode, ErrorPayload};
use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    WozLive,
    AnnotateReplay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionKind {
    Interrupt,
    Label(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// Wall seconds since the session was created.
    pub t_received: f64,
    pub t_scene: f64,
    #[serde(flatten)]
    pub kind: DecisionKind,
    pub annotator_id: String,
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub mode: Mode,
    pub trial_id: String,
    /// Current scene time.
    pub clock: f64,
    /// Scene time at which the stream ends.
    pub end: f64,
    pub time_scale: f64,
    pub clients: usize,
    pub decisions: usize,
    pub finished: bool,
}

/// A recorded detection log and its 2 Hz replay grid.
#[derive(Debug, Clone)]
pub struct Replay {
    pub trial_id: String,
    pub records: Arc<Vec<DetectionRecord>>,
}

impl Replay {
    pub fn new(trial_id: impl Into<String>, mut records: Vec<DetectionRecord>) -> Self {
        records.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self { trial_id: trial_id.into(), records: Arc::new(records) }
    }

    /// Tick times `0, 0.5, ...` through the last record, the grid the
    /// batch fuser uses for the same log.
    pub fn ticks(&self) -> Vec<f64> {
        let Some(last) = self.records.last() else { return Vec::new() };
        let n = (last.t / TICK_SECONDS).ceil() as usize + 1;
        (0..n).map(|k| k as f64 * TICK_SECONDS).collect()
    }
}

enum Source {
    Live(Option<Box<TrialSim>>),
    Replay { replay: Replay, ticks: Vec<f64>, fusion: FusionConfig },
}

pub struct SessionCore {
    pub id: String,
    pub mode: Mode,
    pub trial_id: String,
    pub time_scale: f64,
    source: Source,
    /// Index of the next tick to emit.
    next_tick: usize,
    clock: f64,
    finished: bool,
    decisions: Vec<DecisionRecord>,
    last_by_annotator: HashMap<String, f64>,
    latest: Option<SceneSnapshot>,
    trial_log: Option<TrialLog>,
}

fn reject(code: ErrorCode, message: impl Into<String>) -> ErrorPayload {
    ErrorPayload { code, message: message.into() }
}

impl SessionCore {
    pub fn live(id: String, sim: TrialSim, trial_id: String, time_scale: f64) -> Self {
        Self::with_source(id, Mode::WozLive, trial_id, time_scale, Source::Live(Some(Box::new(sim))))
    }

    pub fn replay(id: String, replay: Replay, fusion: FusionConfig, time_scale: f64) -> Self {
        let ticks = replay.ticks();
        let trial_id = replay.trial_id.clone();
        Self::with_source(id, Mode::AnnotateReplay, trial_id, time_scale, Source::Replay { replay, ticks, fusion })
    }

    fn with_source(id: String, mode: Mode, trial_id: String, time_scale: f64, source: Source) -> Self {
        Self {
            id,
            mode,
            trial_id,
            time_scale,
            source,
            next_tick: 0,
            clock: 0.0,
            finished: false,
            decisions: Vec::new(),
            last_by_annotator: HashMap::new(),
            latest: None,
            trial_log: None,
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn end(&self) -> f64 {
        match &self.source {
            Source::Live(Some(sim)) => sim.end_time(),
            Source::Live(None) => self.trial_log.as_ref().map_or(self.clock, |l| l.end_t),
            Source::Replay { ticks, .. } => ticks.last().copied().unwrap_or(0.0),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn latest(&self) -> Option<&SceneSnapshot> {
        self.latest.as_ref()
    }

    pub fn trial_log(&self) -> Option<&TrialLog> {
        self.trial_log.as_ref()
    }

    /// Replay tick grid; empty for live sessions.
    pub fn ticks(&self) -> &[f64] {
        match &self.source {
            Source::Replay { ticks, .. } => ticks,
            Source::Live(_) => &[],
        }
    }

    pub fn info(&self, clients: usize) -> SessionInfo {
        SessionInfo {
            session_id: self.id.clone(),
            mode: self.mode,
            trial_id: self.trial_id.clone(),
            clock: self.clock,
            end: self.end(),
            time_scale: self.time_scale,
            clients,
            decisions: self.decisions.len(),
            finished: self.finished,
        }
    }

    /// Emits the next tick's snapshot, or None once the stream has ended.
    pub fn step(&mut self) -> Result<Option<SceneSnapshot>, ServiceError> {
        if self.finished {
            return Ok(None);
        }
        let t = self.next_tick as f64 * TICK_SECONDS;
        let snapshot = match &mut self.source {
            Source::Live(slot) => {
                let sim = slot.as_mut().expect("live simulator present until finished");
                if t >= sim.end_time() {
                    self.finish_live()?;
                    return Ok(None);
                }
                sim.run_until(t)?;
                sim.snapshot(t)
            }
            Source::Replay { replay, ticks, fusion } => {
                let Some(&t) = ticks.get(self.next_tick) else {
                    self.finished = true;
                    return Ok(None);
                };
                let recs = &replay.records;
                let lo = recs.partition_point(|r| r.t <= t - TICK_SECONDS);
                let hi = recs.partition_point(|r| r.t <= t);
                let window = &recs[lo..hi];
                let frame = fuse_window(window, t, fusion);
                SceneSnapshot::from_window(t, window, &frame, None)
            }
        };
        self.next_tick += 1;
        self.clock = t;
        self.latest = Some(snapshot.clone());
        Ok(Some(snapshot))
    }

    /// Runs a live simulation to its end; no-op for replays.
    pub fn finish_live(&mut self) -> Result<(), ServiceError> {
        if let Source::Live(slot) = &mut self.source {
            if let Some(sim) = slot.take() {
                let log = sim.finish()?;
                self.clock = self.clock.max(log.end_t);
                self.trial_log = Some(log);
            }
        }
        self.finished = true;
        Ok(())
    }

    /// Applies one client command made at scene time `t_scene`.
    pub fn command(&mut self, t_scene: f64, body: &Body, t_received: f64) -> Result<Ack, ErrorPayload> {
        if self.finished {
            return Err(reject(ErrorCode::StaleSession, "the session stream has ended"));
        }
        let (annotator, kind) = match (body, self.mode) {
            (Body::Interrupt(a), Mode::WozLive) => (&a.annotator_id, DecisionKind::Interrupt),
            (Body::Label(l), Mode::AnnotateReplay) => {
                if l.value > 1 {
                    return Err(reject(ErrorCode::InvalidLabel, format!("label {} is not 0 or 1", l.value)));
                }
                (&l.annotator_id, DecisionKind::Label(l.value))
            }
            (Body::Interrupt(_) | Body::Label(_), mode) => {
                return Err(reject(ErrorCode::WrongMode, format!("command not accepted in {mode:?} sessions")))
            }
            _ => return Err(reject(ErrorCode::BadMessage, "not a client command")),
        };
        if !t_scene.is_finite() || t_scene > self.clock + 1e-9 {
            return Err(reject(
                ErrorCode::FutureTime,
                format!("t_scene {t_scene} is ahead of the session clock {}", self.clock),
            ));
        }
        if let Some(&last) = self.last_by_annotator.get(annotator) {
            if t_scene < last {
                return Err(reject(
                    ErrorCode::OutOfOrder,
                    format!("t_scene {t_scene} precedes this annotator's previous decision at {last}"),
                ));
            }
        }
        let (status, entry) = match (kind, &mut self.source) {
            (DecisionKind::Interrupt, Source::Live(Some(sim))) => {
                let at = t_scene.max(sim.now());
                let (ack, entry) = sim.signal(at).map_err(|e| reject(ErrorCode::StaleSession, e.to_string()))?;
                let status = if ack == SignalAck::Latched { AckStatus::Latched } else { AckStatus::Redundant };
                (status, Some(entry))
            }
            (DecisionKind::Interrupt, _) => return Err(reject(ErrorCode::StaleSession, "the simulation has ended")),
            (DecisionKind::Label(_), _) => (AckStatus::Recorded, None),
        };
        self.last_by_annotator.insert(annotator.clone(), t_scene);
        self.decisions.push(DecisionRecord { t_received, t_scene, kind, annotator_id: annotator.clone(), status, entry });
        let command = if kind == DecisionKind::Interrupt { "interrupt" } else { "label" };
        Ok(Ack { command: command.into(), status, entry, decision: self.decisions.len() - 1 })
    }
}
