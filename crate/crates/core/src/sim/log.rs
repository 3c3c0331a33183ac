//! Trial records.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::BuildExperience;
use super::participant::Segment;
use super::schedule::TrialSchedule;
use super::SimError;
use crate::policy::{InterruptionOutcome, PolicyKind};

pub const TRIAL_LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    RobotEnter,
    /// Robot reached the observation point and starts its policy.
    Observe,
    WizardSignal { honored: bool },
    ApproachDecision { wait: f64, busy: bool },
    Request,
    Accept { lag: f64 },
    Ignore,
    BuildComplete,
    RobotExit,
    MainBuildDone { build: usize },
    TrialEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<usize>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub index: usize,
    pub warmup: bool,
    /// Still in progress when the trial ended.
    pub truncated: bool,
    pub enter_t: f64,
    pub observe_t: Option<f64>,
    pub decision_t: Option<f64>,
    pub request_t: Option<f64>,
    pub outcome: Option<InterruptionOutcome>,
    pub exit_t: Option<f64>,
}

impl EntryRecord {
    pub fn metric_bearing(&self) -> bool {
        !self.warmup && !self.truncated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainBuildRecord {
    pub build: usize,
    pub metric: bool,
    pub work_s: f64,
    pub completed_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub format_version: u32,
    pub trial_id: String,
    pub condition: PolicyKind,
    pub seed: u64,
    pub experience: BuildExperience,
    pub schedule: TrialSchedule,
    /// Participant activity over the whole trial, contiguous.
    pub timeline: Vec<Segment>,
    pub builds: Vec<MainBuildRecord>,
    pub entries: Vec<EntryRecord>,
    pub events: Vec<TrialEvent>,
    pub end_t: f64,
}

impl TrialLog {
    pub fn segment_at(&self, t: f64) -> Option<&Segment> {
        let i = self.timeline.partition_point(|s| s.start <= t);
        self.timeline[..i].last().filter(|s| t < s.end)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trial log serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| SimError::Format(e.to_string()))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(TRIAL_LOG_VERSION) => {}
            Some(v) => return Err(SimError::Version(v as u32)),
            None => return Err(SimError::Format("missing format_version".into())),
        }
        serde_json::from_value(value).map_err(|e| SimError::Format(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, self.to_json()).map_err(|source| SimError::Io { path: path.display().to_string(), source })
    }

    pub fn read(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SimError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}
