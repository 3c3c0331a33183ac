use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{InterruptionOutcome, PolicyKind};
use crate::scene::ActivityKind;
use crate::sim::{SegmentActivity, TrialLog};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("events out of time order at index {0}")]
    EventOrder(usize),
    #[error("entry {entry}: {message}")]
    Entry { entry: usize, message: String },
    #[error("timeline is not contiguous at t = {0}")]
    Timeline(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial_id: String,
    pub condition: PolicyKind,
    /// Metric-bearing entries that reached an approach decision.
    pub approaches: usize,
    /// Share of those approaches decided while a main build was underway
    /// (0 when there were none).
    pub pct_interruptions_during_build: f64,
    pub wait_busy: Vec<f64>,
    pub wait_idle: Vec<f64>,
    pub idle_time: f64,
    pub interruptions_encountered: usize,
    pub interruptions_ignored: usize,
    pub lags: Vec<f64>,
    pub durations: Vec<f64>,
    /// Lags and durations of entries that found the participant building.
    pub busy_lags: Vec<f64>,
    pub busy_durations: Vec<f64>,
    pub main_builds_completed: usize,
    pub robot_builds_completed: usize,
    pub tasks_completed: usize,
}

fn entry_err(entry: usize, message: &str) -> MetricsError {
    MetricsError::Entry { entry, message: message.into() }
}

fn check(log: &TrialLog) -> Result<(), MetricsError> {
    if let Some(i) = log.events.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(MetricsError::EventOrder(i + 1));
    }
    if let Some(w) = log.timeline.windows(2).find(|w| (w[0].end - w[1].start).abs() > 1e-9) {
        return Err(MetricsError::Timeline(w[0].end));
    }
    for e in &log.entries {
        let times = [Some(e.enter_t), e.observe_t, e.decision_t, e.request_t, e.exit_t];
        let present: Vec<f64> = times.iter().flatten().copied().collect();
        if present.windows(2).any(|w| w[1] < w[0]) {
            return Err(entry_err(e.index, "enter, observe, decision, request and exit are out of order"));
        }
        // Each stage needs the previous one.
        if times.windows(2).take(3).any(|w| w[0].is_none() && w[1].is_some()) {
            return Err(entry_err(e.index, "a later stage is recorded without an earlier one"));
        }
        if !e.truncated && (e.outcome.is_none() || e.request_t.is_none() || e.exit_t.is_none()) {
            return Err(entry_err(e.index, "a completed entry needs a request, an outcome and an exit"));
        }
        if let Some(InterruptionOutcome::Accepted { lag, build_time }) = e.outcome {
            if !(lag >= 0.0 && build_time >= 0.0 && (lag + build_time).is_finite()) {
                return Err(entry_err(e.index, "negative or non-finite acceptance lag"));
            }
        }
    }
    Ok(())
}

/// Metrics over the metric-bearing part of one trial.
pub fn compute_metrics(log: &TrialLog) -> Result<TrialMetrics, MetricsError> {
    check(log)?;
    let main_at = |t: f64| matches!(log.segment_at(t).map(|s| s.activity), Some(SegmentActivity::MainBuild(_)));

    let mut m = TrialMetrics {
        trial_id: log.trial_id.clone(),
        condition: log.condition,
        approaches: 0,
        pct_interruptions_during_build: 0.0,
        wait_busy: Vec::new(),
        wait_idle: Vec::new(),
        idle_time: 0.0,
        interruptions_encountered: 0,
        interruptions_ignored: 0,
        lags: Vec::new(),
        durations: Vec::new(),
        busy_lags: Vec::new(),
        busy_durations: Vec::new(),
        main_builds_completed: 0,
        robot_builds_completed: 0,
        tasks_completed: 0,
    };
    let mut during = 0;
    for e in log.entries.iter().filter(|e| e.metric_bearing()) {
        let (Some(observe), Some(decision)) = (e.observe_t, e.decision_t) else { continue };
        m.approaches += 1;
        if main_at(decision) {
            during += 1;
        }
        let busy = main_at(observe);
        if busy {
            m.wait_busy.push(decision - observe);
        } else {
            m.wait_idle.push(decision - observe);
        }
        if let Some(outcome) = e.outcome {
            m.interruptions_encountered += 1;
            match outcome.lag() {
                Some(lag) => {
                    m.lags.push(lag);
                    m.robot_builds_completed += 1;
                    if busy {
                        m.busy_lags.push(lag);
                    }
                }
                None => m.interruptions_ignored += 1,
            }
            m.durations.push(outcome.duration());
            if busy {
                m.busy_durations.push(outcome.duration());
            }
        }
    }
    if m.approaches > 0 {
        m.pct_interruptions_during_build = during as f64 / m.approaches as f64;
    }
    let from = log.schedule.metric_start();
    m.idle_time = log
        .timeline
        .iter()
        .filter(|s| s.kind != ActivityKind::Building)
        .map(|s| (s.end.min(log.end_t) - s.start.max(from)).max(0.0))
        .sum();
    m.main_builds_completed = log.builds.iter().filter(|b| b.metric && b.completed_at.is_some()).count();
    m.tasks_completed = m.main_builds_completed + m.robot_builds_completed;
    Ok(m)
}
