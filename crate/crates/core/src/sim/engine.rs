//! Event-queue simulation of one trial.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{BuildExperience, ExperimentConfig, WizardKind, WizardPreset};
use super::log::{EntryRecord, EventKind, MainBuildRecord, TrialEvent, TrialLog, TRIAL_LOG_VERSION};
use super::participant::{Participant, SegmentActivity};
use super::schedule::TrialSchedule;
use super::snapshot::{RobotState, RobotView, SceneSnapshot};
use super::SimError;
use crate::features::{fuse_window, Imputer, StreamingFuser};
use crate::ldcrf::{LdcrfModel, OnlineSession};
use crate::policy::{interruption_outcome, Decision, MdlState, PolicyKind, RndState, SignalAck, WozState, TICK};
use crate::rng;
use crate::scene::{ActivityKind, SceneConfig, SceneGenerator};

const TAG_SCENE: u64 = 0x51;
const TAG_POLICY: u64 = 0x52;
const TAG_RESPONSE: u64 = 0x53;
const TAG_WIZARD: u64 = 0x54;
const TAG_EXPERIENCE: u64 = 0x55;

/// Where WOZ decisions come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WizardSource {
    Preset(WizardPreset),
    /// Signals arrive through [`TrialSim::signal`].
    Live,
}

#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub trial_id: String,
    pub condition: PolicyKind,
    pub config: ExperimentConfig,
    pub model: Option<Arc<LdcrfModel>>,
    pub wizard: Option<WizardSource>,
    pub long_first: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    TrialEnd,
    Enter,
    Observe,
    Tick,
    RndFlip,
    Request,
    Accept,
    Timeout,
    BuildDone,
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    t: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed: BinaryHeap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.seq.cmp(&self.seq))
    }
}

struct Pipeline {
    fuser: StreamingFuser,
    imputer: Imputer,
    session: OnlineSession,
}

struct Entry {
    record: EntryRecord,
    state: RobotState,
    rnd: Option<RndState>,
    mdl: MdlState,
    woz: WozState,
    busy_at_observe: bool,
    accepted_lag: Option<f64>,
    build_time: f64,
    policy_rng: ChaCha8Rng,
}

pub struct TrialSim {
    setup: TrialSetup,
    schedule: TrialSchedule,
    experience: BuildExperience,
    participant: Participant,
    scene: SceneGenerator,
    queue: BinaryHeap<Queued>,
    seq: u64,
    now: f64,
    finished: bool,
    entry: Option<Entry>,
    next_index: usize,
    entries: Vec<EntryRecord>,
    events: Vec<TrialEvent>,
    pipeline: Option<Pipeline>,
    /// Requests received during each main build so far.
    pending: Vec<u32>,
}

impl TrialSim {
    pub fn new(setup: TrialSetup) -> Result<Self, SimError> {
        setup.config.validate()?;
        match (setup.condition, &setup.model, &setup.wizard) {
            (PolicyKind::Mdl, None, _) => return Err(SimError::Config("MDL requires a trained model".into())),
            (PolicyKind::Woz, _, None) => {
                return Err(SimError::Config("WOZ requires a wizard preset or a live wizard".into()))
            }
            (c, _, Some(_)) if c != PolicyKind::Woz => {
                return Err(SimError::Config(format!("a wizard is configured but the condition is {}", c.name())))
            }
            (c, Some(_), _) if c != PolicyKind::Mdl => {
                return Err(SimError::Config(format!("a model is supplied but the condition is {}", c.name())))
            }
            _ => {}
        }
        if let Some(m) = &setup.model {
            if m.schema != crate::features::FeatureSchema::standard() {
                return Err(SimError::Config("the MDL model must use the standard feature schema".into()));
            }
        }
        let schedule = TrialSchedule::build(&setup.config.schedule, setup.long_first)?;
        let p = &setup.config.participant;
        let experience = if rng::stream(setup.seed, &[TAG_EXPERIENCE]).random::<f64>() < p.high_experience_prob {
            BuildExperience::High
        } else {
            BuildExperience::Low
        };
        let participant = Participant::new(schedule.clone(), *p, experience, setup.seed);
        let scene_cfg = SceneConfig { noise: setup.config.noise, ..SceneConfig::default() };
        let scene = SceneGenerator::new(scene_cfg, rng::derive_seed(setup.seed, &[TAG_SCENE]));
        let builds = schedule.slots().count();
        let mut sim = Self {
            schedule,
            experience,
            participant,
            scene,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            finished: false,
            entry: None,
            next_index: 0,
            entries: Vec::new(),
            events: Vec::new(),
            pipeline: None,
            pending: vec![0; builds],
            setup,
        };
        sim.push(sim.schedule.end(), Ev::TrialEnd);
        sim.push(0.0, Ev::Enter);
        Ok(sim)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn end_time(&self) -> f64 {
        self.schedule.end()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn schedule(&self) -> &TrialSchedule {
        &self.schedule
    }

    fn push(&mut self, t: f64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Queued { t, seq: self.seq, ev });
    }

    fn log(&mut self, t: f64, kind: EventKind) {
        let entry = self.entry.as_ref().map(|e| e.record.index);
        self.events.push(TrialEvent { t, entry, kind });
    }

    /// Processes every event at or before `t`.
    pub fn run_until(&mut self, t: f64) -> Result<(), SimError> {
        while let Some(&q) = self.queue.peek() {
            if q.t > t || self.finished {
                break;
            }
            self.queue.pop();
            self.now = q.t;
            self.handle(q.t, q.ev)?;
        }
        if !self.finished {
            self.now = self.now.max(t.min(self.end_time()));
        }
        Ok(())
    }

    pub fn robot_view(&self) -> RobotView {
        match &self.entry {
            Some(e) => RobotView { state: e.state, entry: e.record.index, latched: e.woz.latched || e.woz.pending_signal },
            None => RobotView {
                state: if self.finished { RobotState::Finished } else { RobotState::Returning },
                entry: self.next_index,
                latched: false,
            },
        }
    }

    /// Live wizard signal at scene time `t` (≥ the current time).
    pub fn signal(&mut self, t: f64) -> Result<(SignalAck, usize), SimError> {
        self.run_until(t)?;
        let live = self.setup.wizard == Some(WizardSource::Live);
        let (ack, index) = match self.entry.as_mut() {
            Some(e) if live && e.record.decision_t.is_none() => (e.woz.signal(), e.record.index),
            Some(e) => (SignalAck::Redundant, e.record.index),
            None => (SignalAck::Redundant, self.next_index),
        };
        self.log(t, EventKind::WizardSignal { honored: ack == SignalAck::Latched });
        Ok((ack, index))
    }

    /// What the robot's camera shows at `t`.
    pub fn snapshot(&mut self, t: f64) -> SceneSnapshot {
        self.participant.advance_to(t);
        let p = &self.participant;
        let records = self.scene.records_in((t - TICK, t + 1e-9), |x| p.lookup(x).map(|s| s.kind));
        let frame = fuse_window(&records, t, &self.setup.config.fusion);
        SceneSnapshot::from_window(t, &records, &frame, Some(self.robot_view()))
    }

    fn handle(&mut self, t: f64, ev: Ev) -> Result<(), SimError> {
        let cfg = self.setup.config.clone();
        match ev {
            Ev::TrialEnd => {
                if let Some(mut e) = self.entry.take() {
                    e.record.truncated = true;
                    self.entries.push(e.record);
                }
                self.log(t, EventKind::TrialEnd);
                self.finished = true;
            }
            Ev::Enter => {
                let index = self.next_index;
                self.next_index += 1;
                self.entry = Some(Entry {
                    record: EntryRecord {
                        index,
                        warmup: index < cfg.robot.warmup_entries,
                        truncated: false,
                        enter_t: t,
                        observe_t: None,
                        decision_t: None,
                        request_t: None,
                        outcome: None,
                        exit_t: None,
                    },
                    state: RobotState::ToObservation,
                    rnd: None,
                    mdl: MdlState::new(cfg.mdl.required_ticks),
                    woz: WozState::default(),
                    busy_at_observe: false,
                    accepted_lag: None,
                    build_time: 0.0,
                    policy_rng: rng::stream(self.setup.seed, &[TAG_POLICY, index as u64]),
                });
                self.log(t, EventKind::RobotEnter);
                self.push(t + cfg.robot.door_to_observe_s, Ev::Observe);
            }
            Ev::Observe => {
                let busy = self.participant.main_build_at(t).is_some();
                let e = self.entry.as_mut().expect("entry in progress");
                e.record.observe_t = Some(t);
                e.state = RobotState::Observing;
                e.busy_at_observe = busy;
                e.mdl.reset();
                self.log(t, EventKind::Observe);
                match self.setup.condition {
                    PolicyKind::Rnd => {
                        let e = self.entry.as_mut().expect("entry");
                        let s = RndState::new(cfg.rnd.max_base_wait, &mut e.policy_rng);
                        let at = t + s.next_flip().expect("fresh state");
                        e.rnd = Some(s);
                        self.push(at, Ev::RndFlip);
                    }
                    PolicyKind::Mdl => {
                        let model = self.setup.model.clone().expect("checked in new");
                        let width = model.schema.len();
                        self.pipeline = Some(Pipeline {
                            fuser: StreamingFuser::new(cfg.fusion),
                            imputer: Imputer::new(width, model.hyperparams.imputation_horizon),
                            session: OnlineSession::new(model),
                        });
                        self.push(t + TICK, Ev::Tick);
                    }
                    PolicyKind::Woz => self.push(t + TICK, Ev::Tick),
                }
            }
            Ev::RndFlip => {
                let allowed = self.participant.kind_at(t) != Some(ActivityKind::Absent);
                let e = self.entry.as_mut().expect("entry");
                let s = e.rnd.as_mut().expect("rnd state");
                if s.flip(&mut e.policy_rng, allowed) == Decision::Approach {
                    self.decide(t);
                } else {
                    let at = e.record.observe_t.expect("observing") + s.next_flip().expect("undecided");
                    self.push(at, Ev::RndFlip);
                }
            }
            Ev::Tick => {
                let decision = match self.setup.condition {
                    PolicyKind::Mdl => {
                        let label = self.classify(t)?;
                        self.entry.as_mut().expect("entry").mdl.tick(label)
                    }
                    PolicyKind::Woz => {
                        if let Some(WizardSource::Preset(preset)) = self.setup.wizard {
                            let pending = {
                                let e = self.entry.as_ref().expect("entry");
                                e.woz.latched || e.woz.pending_signal
                            };
                            if !pending {
                                if let Some(s) = self.preset_signal_time(&preset, t) {
                                    self.entry.as_mut().expect("entry").woz.signal();
                                    self.log(s, EventKind::WizardSignal { honored: true });
                                }
                            }
                        }
                        self.entry.as_mut().expect("entry").woz.tick()
                    }
                    PolicyKind::Rnd => unreachable!("RND runs on flips"),
                };
                if decision == Decision::Approach {
                    self.decide(t);
                } else {
                    self.push(t + TICK, Ev::Tick);
                }
            }
            Ev::Request => {
                let e = self.entry.as_mut().expect("entry");
                e.record.request_t = Some(t);
                e.state = RobotState::Requesting;
                self.log(t, EventKind::Request);
                self.respond(t);
            }
            Ev::Accept => {
                let e = self.entry.as_mut().expect("entry");
                let lag = e.accepted_lag.expect("accepted");
                let (bt, index) = (e.build_time, e.record.index);
                e.state = RobotState::WaitingForBuild;
                self.participant.start_robot_build(t, bt, index);
                self.log(t, EventKind::Accept { lag });
                self.push(t + bt, Ev::BuildDone);
            }
            Ev::BuildDone => {
                self.log(t, EventKind::BuildComplete);
                self.finish_entry(t, true)?;
            }
            Ev::Timeout => {
                self.log(t, EventKind::Ignore);
                self.finish_entry(t, false)?;
            }
        }
        Ok(())
    }

    fn decide(&mut self, t: f64) {
        let e = self.entry.as_mut().expect("entry");
        let observe = e.record.observe_t.expect("observing");
        e.record.decision_t = Some(t);
        e.state = RobotState::Approaching;
        let busy = e.busy_at_observe;
        self.pipeline = None;
        self.log(t, EventKind::ApproachDecision { wait: t - observe, busy });
        let r = &self.setup.config;
        self.push(t + r.lifecycle.approach_overhead_s + r.robot.observe_to_table_s, Ev::Request);
    }

    /// Participant's reaction to a request at `t`.
    fn respond(&mut self, t: f64) {
        let cfg = &self.setup.config;
        let m = cfg.participant;
        let timeout = cfg.lifecycle.timeout_s;
        let index = self.entry.as_ref().expect("entry").record.index;
        let mut r = rng::stream(self.setup.seed, &[TAG_RESPONSE, index as u64]);
        let seg = self.participant.segment_at(t);
        let lag = match seg.map(|s| (s.kind, s.activity, s.end)) {
            Some((_, SegmentActivity::MainBuild(b), stretch_end)) => {
                let pending = self.pending[b];
                self.pending[b] += 1;
                if r.random::<f64>() < m.ignore_probability(true, pending) {
                    None
                } else {
                    // Finishing the current stretch is also a stopping point.
                    Some(m.busy_response_lag.sample(&mut r).min(stretch_end - t))
                }
            }
            Some((ActivityKind::Absent, _, back)) => Some(back - t + m.idle_response_lag.sample(&mut r)),
            Some(_) => Some(m.idle_response_lag.sample(&mut r)),
            None => None,
        };
        let build_time = m.robot_build_s.sample(&mut r);
        let e = self.entry.as_mut().expect("entry");
        match lag.filter(|l| *l <= timeout) {
            Some(l) => {
                e.accepted_lag = Some(l);
                e.build_time = build_time;
                self.push(t + l, Ev::Accept);
            }
            None => self.push(t + timeout, Ev::Timeout),
        }
    }

    fn finish_entry(&mut self, t: f64, accepted: bool) -> Result<(), SimError> {
        let timeout = self.setup.config.lifecycle.timeout_s;
        let mut e = self.entry.take().expect("entry");
        let request = e.record.request_t.expect("requested");
        let accept = accepted.then(|| request + e.accepted_lag.expect("lag"));
        e.record.outcome = Some(interruption_outcome(request, accept, e.build_time, timeout)?);
        e.record.exit_t = Some(t);
        let index = e.record.index;
        self.entries.push(e.record);
        self.events.push(TrialEvent { t, entry: Some(index), kind: EventKind::RobotExit });
        self.push(t + self.setup.config.robot.return_s, Ev::Enter);
        Ok(())
    }

    /// One MDL classification at tick `t`; an empty frame counts as 0.
    fn classify(&mut self, t: f64) -> Result<u8, SimError> {
        self.participant.advance_to(t);
        let p = &self.participant;
        let records = self.scene.records_in((t - TICK, t), |x| p.lookup(x).map(|s| s.kind));
        let pipe = self.pipeline.as_mut().expect("MDL pipeline");
        for r in records {
            pipe.fuser.push(r);
        }
        let frame = pipe.fuser.frame_at(t);
        let imputed = pipe.imputer.push(&frame);
        let normalized = pipe.session.model().normalization.apply(&imputed).map_err(crate::ldcrf::LdcrfError::from)?;
        let out = pipe.session.push(normalized)?;
        Ok(if frame.is_empty() { 0 } else { out.label })
    }

    /// When a simulated wizard would have signalled, if by `t`. The wizard
    /// judges idleness at `t - reaction_delay`; the press lands after the
    /// delay even if the participant has resumed building by then.
    fn preset_signal_time(&mut self, preset: &WizardPreset, t: f64) -> Option<f64> {
        let observe = self.entry.as_ref()?.record.observe_t?;
        let seen = t - preset.reaction_delay_s;
        if let Some(idle) = self.participant.idle_since(seen) {
            let decided = (idle + preset.dwell_s).max(observe);
            return (decided <= seen + 1e-9).then_some(decided + preset.reaction_delay_s);
        }
        if preset.kind != WizardKind::Aggressive {
            return None;
        }
        let build = self.participant.main_build_at(t)?;
        let mut r = rng::stream(self.setup.seed, &[TAG_WIZARD, build as u64]);
        if r.random::<f64>() >= preset.anticipate_prob {
            return None;
        }
        let u: f64 = r.random();
        let end = self.participant.build_stretch_end(t)?;
        if !self.participant.build_finished_by(build, end) {
            return None;
        }
        let work = self.participant.work[build];
        let s = (end - u * preset.anticipate_fraction * work).max(observe + preset.reaction_delay_s);
        (s <= t).then_some(s)
    }

    /// Runs to the end of the trial and assembles the log.
    pub fn finish(mut self) -> Result<TrialLog, SimError> {
        self.run_until(f64::INFINITY)?;
        let end = self.end_time();
        let (timeline, work) = self.participant.finish();
        let mut builds = Vec::new();
        let mut events = std::mem::take(&mut self.events);
        for slot in self.schedule.slots() {
            let mut done = 0.0;
            let mut completed_at = None;
            for s in timeline.iter().filter(|s| s.activity == SegmentActivity::MainBuild(slot.build)) {
                done += s.end - s.start;
                if done >= work[slot.build] - 1e-6 {
                    completed_at = Some(s.end);
                    break;
                }
            }
            if let Some(at) = completed_at {
                events.push(TrialEvent { t: at, entry: None, kind: EventKind::MainBuildDone { build: slot.build } });
            }
            builds.push(MainBuildRecord { build: slot.build, metric: slot.metric, work_s: work[slot.build], completed_at });
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(TrialLog {
            format_version: TRIAL_LOG_VERSION,
            trial_id: self.setup.trial_id,
            condition: self.setup.condition,
            seed: self.setup.seed,
            experience: self.experience,
            schedule: self.schedule,
            timeline,
            builds,
            entries: self.entries,
            events,
            end_t: end,
        })
    }
}
