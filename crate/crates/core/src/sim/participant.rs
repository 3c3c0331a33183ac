//! The participant's evolving activity timeline.
//!
//! Segments are generated lazily and may be cut when the participant takes
//! on a robot build. Every random draw is keyed by the segment's start time
//! so regenerating after a cut, or querying further ahead, never changes
//! what happens elsewhere.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{BuildExperience, ParticipantModel};
use super::schedule::TrialSchedule;
use crate::rng;
use crate::scene::{sample_leisure, ActivityKind};

const TAG_WORK: u64 = 0x71;
const TAG_SEGMENT: u64 = 0x72;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum SegmentActivity {
    MainBuild(usize),
    RobotBuild(usize),
    Leisure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: ActivityKind,
    pub activity: SegmentActivity,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Participant {
    schedule: TrialSchedule,
    model: ParticipantModel,
    seed: u64,
    /// Work each main build needs.
    pub work: Vec<f64>,
    remaining: Vec<f64>,
    segments: Vec<Segment>,
    cursor: f64,
}

fn ms_key(t: f64) -> u64 {
    rng::index((t * 1000.0).round() as i64)
}

impl Participant {
    pub fn new(schedule: TrialSchedule, model: ParticipantModel, experience: BuildExperience, seed: u64) -> Self {
        let scale = match experience {
            BuildExperience::High => 1.0,
            BuildExperience::Low => model.low_experience_slowdown,
        };
        let work: Vec<f64> = schedule
            .slots()
            .map(|s| model.build_work_s.sample(&mut rng::stream(seed, &[TAG_WORK, s.build as u64])) * scale)
            .collect();
        Self { remaining: work.clone(), work, schedule, model, seed, segments: Vec::new(), cursor: 0.0 }
    }

    #[cfg(test)]
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Generates segments until one covers `t`.
    pub fn advance_to(&mut self, t: f64) {
        let end = self.schedule.end();
        while self.cursor <= t && self.cursor < end {
            let seg = self.next_segment(self.cursor, end);
            self.cursor = seg.end;
            self.segments.push(seg);
        }
    }

    fn next_segment(&mut self, c: f64, end: f64) -> Segment {
        let slot = self.schedule.slots().find(|s| s.start <= c && c < s.end).copied();
        if let Some(slot) = slot {
            let left = self.remaining[slot.build];
            if left > 1e-9 {
                let stop = (c + left).min(slot.end);
                self.remaining[slot.build] -= stop - c;
                return Segment { kind: ActivityKind::Building, activity: SegmentActivity::MainBuild(slot.build), start: c, end: stop };
            }
        }
        // Leisure until the next slot boundary with work left, or trial end.
        let boundary = self
            .schedule
            .slots()
            .filter(|s| s.start > c && self.remaining[s.build] > 1e-9)
            .map(|s| s.start)
            .fold(end, f64::min);
        let m = &self.model;
        let mut r = rng::stream(self.seed, &[TAG_SEGMENT, ms_key(c)]);
        let (kind, len) = if m.absent_prob > 0.0 && r.random::<f64>() < m.absent_prob {
            (ActivityKind::Absent, r.random_range(m.absent_s.0..=m.absent_s.1))
        } else {
            let kind = sample_leisure(&mut r, &m.leisure_weights);
            (kind, r.random_range(m.leisure_segment_s.0..=m.leisure_segment_s.1))
        };
        Segment { kind, activity: SegmentActivity::Leisure, start: c, end: (c + len).min(boundary) }
    }

    pub fn segment_at(&mut self, t: f64) -> Option<Segment> {
        self.advance_to(t);
        self.lookup(t)
    }

    /// Segment covering `t` among those generated so far.
    pub fn lookup(&self, t: f64) -> Option<Segment> {
        let i = self.segments.partition_point(|s| s.start <= t);
        self.segments[..i].last().filter(|s| t < s.end).copied()
    }

    pub fn kind_at(&mut self, t: f64) -> Option<ActivityKind> {
        self.segment_at(t).map(|s| s.kind)
    }

    /// Main build in progress at `t`.
    pub fn main_build_at(&mut self, t: f64) -> Option<usize> {
        match self.segment_at(t)?.activity {
            SegmentActivity::MainBuild(b) => Some(b),
            _ => None,
        }
    }

    /// Start of the unbroken interruptible run containing `t`.
    pub fn idle_since(&mut self, t: f64) -> Option<f64> {
        let cur = self.segment_at(t)?;
        if !cur.kind.interruptible() {
            return None;
        }
        let i = self.segments.partition_point(|s| s.start <= t) - 1;
        let mut start = cur.start;
        for s in self.segments[..i].iter().rev() {
            if s.kind.interruptible() && (s.end - start).abs() < 1e-9 {
                start = s.start;
            } else {
                break;
            }
        }
        Some(start)
    }

    /// Projected end of the main-build stretch containing `t`, assuming no
    /// further interruptions.
    pub fn build_stretch_end(&mut self, t: f64) -> Option<f64> {
        let seg = self.segment_at(t)?;
        matches!(seg.activity, SegmentActivity::MainBuild(_)).then_some(seg.end)
    }

    /// Whether work on `build` has finished (as generated so far).
    pub fn build_finished_by(&mut self, build: usize, t: f64) -> bool {
        self.advance_to(t);
        let done: f64 = self
            .segments
            .iter()
            .filter(|s| s.activity == SegmentActivity::MainBuild(build) && s.start < t)
            .map(|s| s.end.min(t) - s.start)
            .sum();
        done >= self.work[build] - 1e-6
    }

    /// The participant drops everything at `at` for a robot build.
    pub fn start_robot_build(&mut self, at: f64, duration: f64, entry: usize) {
        self.advance_to(at);
        while let Some(last) = self.segments.last_mut() {
            if last.end <= at {
                break;
            }
            let cut_from = last.start.max(at);
            if let SegmentActivity::MainBuild(b) = last.activity {
                self.remaining[b] += last.end - cut_from;
            }
            if last.start < at {
                last.end = at;
                break;
            }
            self.segments.pop();
        }
        let end = at + duration;
        self.segments.push(Segment { kind: ActivityKind::Building, activity: SegmentActivity::RobotBuild(entry), start: at, end });
        self.cursor = end;
    }

    /// Final timeline clipped to the end of the trial.
    pub fn finish(mut self) -> (Vec<Segment>, Vec<f64>) {
        let end = self.schedule.end();
        self.advance_to(end);
        self.segments.retain(|s| s.start < end);
        if let Some(last) = self.segments.last_mut() {
            last.end = last.end.min(end);
        }
        (self.segments, self.work)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::ScheduleConfig;

    fn participant() -> Participant {
        let schedule = TrialSchedule::build(&ScheduleConfig::default(), true).unwrap();
        Participant::new(schedule, ParticipantModel::default(), BuildExperience::High, 4)
    }

    #[test]
    fn timeline_is_contiguous_and_builds_fit_slots() {
        let mut p = participant();
        let schedule = p.schedule.clone();
        p.advance_to(schedule.end());
        let segs = p.segments().to_vec();
        assert_eq!(segs[0].start, 0.0);
        assert!(segs.windows(2).all(|w| (w[0].end - w[1].start).abs() < 1e-9));
        for s in &segs {
            if let SegmentActivity::MainBuild(b) = s.activity {
                let slot = schedule.slots().find(|x| x.build == b).unwrap();
                assert!(s.start >= slot.start && s.end <= slot.end + 1e-9);
            }
        }
        // Breaks are pure leisure.
        let brk = &schedule.blocks[1];
        assert!(segs.iter().filter(|s| s.start >= brk.start && s.end <= brk.end).all(|s| s.kind.is_idle()));
    }

    #[test]
    fn robot_build_pauses_main_build() {
        let mut p = participant();
        let slot = *p.schedule.slots().nth(1).unwrap();
        let at = slot.start + 30.0;
        let before = p.work[slot.build];
        p.start_robot_build(at, 50.0, 3);
        p.advance_to(slot.end);
        assert_eq!(p.kind_at(at + 10.0), Some(ActivityKind::Building));
        assert_eq!(p.segment_at(at + 10.0).unwrap().activity, SegmentActivity::RobotBuild(3));
        let worked: f64 = p
            .segments()
            .iter()
            .filter(|s| s.activity == SegmentActivity::MainBuild(slot.build))
            .map(|s| s.end - s.start)
            .sum();
        assert!((worked - before.min(slot.end - slot.start - 50.0)).abs() < 1e-6);
    }

    #[test]
    fn lookahead_does_not_change_the_timeline() {
        let mut a = participant();
        let mut b = participant();
        a.advance_to(2000.0);
        a.start_robot_build(1500.0, 40.0, 5);
        b.advance_to(1400.0);
        b.start_robot_build(1500.0, 40.0, 5);
        a.advance_to(2700.0);
        b.advance_to(2700.0);
        assert_eq!(a.segments(), b.segments());
    }
}
