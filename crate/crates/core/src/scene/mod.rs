//! Synthetic detector output for the assembly-study room.
//!
//! A trial is described by a time-ordered list of [`ActivityPhase`]s. The
//! generator turns it into the record streams the person, face, object and
//! pose detectors would have published, plus the 2 Hz interruptibility
//! ground truth. Geometry is the unit image square with `y` pointing down.
//!
//! Every record is drawn from a random stream addressed by
//! `(seed, detector, slot)`, so any time window can be generated on its own
//! and matches the corresponding slice of a whole-trial generation. The
//! simulator relies on this to synthesise the scene tick by tick while the
//! participant's timeline is still unfolding.

mod log;

pub use log::{
    parse_record, read_detection_log, read_labels_csv, write_detection_log, write_labels_csv, LogError,
};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivityKind {
    Building,
    IdleCouch,
    IdlePhone,
    IdleDrink,
    IdleRead,
    Absent,
}

impl ActivityKind {
    pub const IDLE: [ActivityKind; 4] = [
        ActivityKind::IdleCouch,
        ActivityKind::IdlePhone,
        ActivityKind::IdleDrink,
        ActivityKind::IdleRead,
    ];

    /// Ground-truth interruptibility: 1 for every idle kind, 0 while building
    /// or out of view.
    pub fn interruptible(self) -> bool {
        self.is_idle()
    }

    pub fn is_idle(self) -> bool {
        !matches!(self, ActivityKind::Building | ActivityKind::Absent)
    }

    fn code(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityPhase {
    pub kind: ActivityKind,
    pub start: f64,
    pub end: f64,
}

impl ActivityPhase {
    pub fn new(kind: ActivityKind, start: f64, end: f64) -> Self {
        Self { kind, start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("phase {index} has start {start} >= end {end}")]
    EmptyPhase { index: usize, start: f64, end: f64 },
    #[error("phase {index} starts at {start} before the previous phase ends at {prev_end}")]
    Overlap { index: usize, start: f64, prev_end: f64 },
    #[error("noise parameter `{name}` = {value} is outside [0, 1]")]
    NoiseRange { name: &'static str, value: f64 },
}

/// Checks that phases are non-empty, time ordered and non-overlapping.
pub fn validate_phases(phases: &[ActivityPhase]) -> Result<(), SceneError> {
    for (index, p) in phases.iter().enumerate() {
        if !(p.start < p.end) {
            return Err(SceneError::EmptyPhase { index, start: p.start, end: p.end });
        }
        if index > 0 && p.start < phases[index - 1].end {
            return Err(SceneError::Overlap { index, start: p.start, prev_end: phases[index - 1].end });
        }
    }
    Ok(())
}

/// Phase active at `t`, if any.
pub fn phase_at(phases: &[ActivityPhase], t: f64) -> Option<ActivityKind> {
    let idx = phases.partition_point(|p| p.end <= t);
    phases.get(idx).filter(|p| p.contains(t)).map(|p| p.kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DetectorKind {
    Person,
    Face,
    Object,
    Pose,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] =
        [DetectorKind::Person, DetectorKind::Face, DetectorKind::Object, DetectorKind::Pose];

    /// Fixed sub-period offset of slot 0, so detectors never fire in lockstep.
    fn phase_offset(self) -> f64 {
        match self {
            DetectorKind::Person => 0.11,
            DetectorKind::Face => 0.37,
            DetectorKind::Object => 0.63,
            DetectorKind::Pose => 0.89,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    /// Euclidean distance from `p` to the box; 0 inside.
    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = ((p.x - self.cx).abs() - 0.5 * self.w).max(0.0);
        let dy = ((p.y - self.cy).abs() - 0.5 * self.h).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonDetection {
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceKeypoints {
    pub left_eye: Point,
    pub right_eye: Point,
    pub nose: Point,
    pub mouth_left: Point,
    pub mouth_right: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectClass {
    #[serde(rename = "book")]
    Book,
    #[serde(rename = "bottle")]
    Bottle,
    #[serde(rename = "bowl")]
    Bowl,
    #[serde(rename = "cup")]
    Cup,
    #[serde(rename = "laptop")]
    Laptop,
    #[serde(rename = "cell phone")]
    CellPhone,
    #[serde(rename = "tablet")]
    Tablet,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 7] = [
        ObjectClass::Book,
        ObjectClass::Bottle,
        ObjectClass::Bowl,
        ObjectClass::Cup,
        ObjectClass::Laptop,
        ObjectClass::CellPhone,
        ObjectClass::Tablet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Book => "book",
            ObjectClass::Bottle => "bottle",
            ObjectClass::Bowl => "bowl",
            ObjectClass::Cup => "cup",
            ObjectClass::Laptop => "laptop",
            ObjectClass::CellPhone => "cell phone",
            ObjectClass::Tablet => "tablet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectDetection {
    pub class: ObjectClass,
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Cleared for detections the counting stage should skip.
    pub counted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseKeypoints {
    pub nose: Keypoint,
    pub left_eye: Keypoint,
    pub right_eye: Keypoint,
    pub left_shoulder: Keypoint,
    pub right_shoulder: Keypoint,
    pub left_elbow: Keypoint,
    pub right_elbow: Keypoint,
    pub left_wrist: Keypoint,
    pub right_wrist: Keypoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detector", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Detection {
    Person(PersonDetection),
    /// `None` when the face detector ran and found nothing.
    Face(Option<FaceKeypoints>),
    Object(ObjectDetection),
    Pose(PoseKeypoints),
}

impl Detection {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Detection::Person(_) => DetectorKind::Person,
            Detection::Face(_) => DetectorKind::Face,
            Detection::Object(_) => DetectorKind::Object,
            Detection::Pose(_) => DetectorKind::Pose,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub t: f64,
    #[serde(flatten)]
    pub detection: Detection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub t: f64,
    pub interruptible: u8,
}

/// Coarse gaze direction as seen from the robot's camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gaze {
    AtRobot,
    LeftRight,
    Down,
}

/// Categorical gaze distribution (weights need not be normalized).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeDistribution {
    pub at_robot: f64,
    pub left_right: f64,
    pub down: f64,
}

impl GazeDistribution {
    fn sample<R: Rng>(&self, rng: &mut R) -> Gaze {
        let total = self.at_robot + self.left_right + self.down;
        let u = rng.random::<f64>() * total;
        if u < self.at_robot {
            Gaze::AtRobot
        } else if u < self.at_robot + self.left_right {
            Gaze::LeftRight
        } else {
            Gaze::Down
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorRates {
    pub person: f64,
    pub face: f64,
    pub object: f64,
    pub pose: f64,
}

impl Default for DetectorRates {
    fn default() -> Self {
        Self { person: 12.0, face: 8.0, object: 12.0, pose: 6.0 }
    }
}

impl DetectorRates {
    pub fn rate(&self, kind: DetectorKind) -> f64 {
        match kind {
            DetectorKind::Person => self.person,
            DetectorKind::Face => self.face,
            DetectorKind::Object => self.object,
            DetectorKind::Pose => self.pose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Probability that any single record is dropped.
    pub dropout: f64,
    /// Standard deviation of the coordinate jitter, in image units.
    pub jitter: f64,
    /// Long-run fraction of time during which the visible behaviour belongs
    /// to the opposite interruptibility class (e.g. a pause mid-build).
    pub inconsistency: f64,
    /// Shortest and longest inconsistent episode, in whole seconds.
    pub episode_min_s: u32,
    pub episode_max_s: u32,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::moderate()
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self { dropout: 0.0, jitter: 0.0, inconsistency: 0.0, episode_min_s: 2, episode_max_s: 6 }
    }

    pub fn moderate() -> Self {
        Self { dropout: 0.1, jitter: 0.006, inconsistency: 0.06, episode_min_s: 2, episode_max_s: 8 }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for (name, value) in
            [("dropout", self.dropout), ("inconsistency", self.inconsistency), ("jitter", self.jitter)]
        {
            if !(0.0..=1.0).contains(&value) {
                return Err(SceneError::NoiseRange { name, value });
            }
        }
        Ok(())
    }

    fn is_noiseless(&self) -> bool {
        self.dropout == 0.0 && self.jitter == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub rates: DetectorRates,
    pub noise: NoiseConfig,
    pub idle_gaze: GazeDistribution,
    pub building_gaze: GazeDistribution,
    /// Seconds per gaze sample; gaze is held constant within a block.
    pub gaze_block_s: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rates: DetectorRates::default(),
            noise: NoiseConfig::default(),
            idle_gaze: GazeDistribution { at_robot: 0.2, left_right: 0.5, down: 0.3 },
            building_gaze: GazeDistribution { at_robot: 0.0, left_right: 0.1, down: 0.9 },
            gaze_block_s: 2.0,
        }
    }
}

// Stream tags for the seeded random streams.
const TAG_RECORD: u64 = 1;
const TAG_GAZE: u64 = 2;
const TAG_EPISODE: u64 = 3;
const TAG_VARIANT: u64 = 4;

/// Face geometry: inter-eye distance and the nose offset (in units of it).
const EYE_SPACING: f64 = 0.05;
const NOSE_DROP_LEVEL: f64 = 0.3;
const NOSE_DROP_DOWN: f64 = 0.6;
const NOSE_SHIFT_SIDE: f64 = 0.4;

/// Background clutter that never sits near a participant.
const CLUTTER: [(ObjectClass, Point); 2] = [
    (ObjectClass::Book, Point::new(0.93, 0.78)),
    (ObjectClass::Bowl, Point::new(0.95, 0.1)),
];

struct Body {
    center: Point,
    size: (f64, f64),
    nose: (f64, f64),
    eyes: f64,
    shoulders: (f64, f64),
    elbows: [(f64, f64); 2],
    wrists: [(f64, f64); 2],
}

fn body_for(kind: ActivityKind) -> Body {
    match kind {
        // Leaning over the table, head down, hands together on the build.
        ActivityKind::Building => Body {
            center: Point::new(0.5, 0.55),
            size: (0.3, 0.7),
            nose: (0.0, -0.17),
            eyes: -0.20,
            shoulders: (0.09, -0.12),
            elbows: [(-0.12, 0.0), (0.12, 0.0)],
            wrists: [(-0.05, 0.06), (0.05, 0.06)],
        },
        ActivityKind::IdleCouch => Body {
            center: Point::new(0.3, 0.6),
            size: (0.35, 0.6),
            nose: (0.0, -0.25),
            eyes: -0.28,
            shoulders: (0.1, -0.15),
            elbows: [(-0.12, -0.02), (0.12, -0.02)],
            wrists: [(-0.13, 0.1), (0.13, 0.1)],
        },
        ActivityKind::IdlePhone => Body {
            center: Point::new(0.35, 0.58),
            size: (0.35, 0.6),
            nose: (0.0, -0.23),
            eyes: -0.26,
            shoulders: (0.1, -0.15),
            elbows: [(-0.12, -0.02), (0.1, -0.03)],
            wrists: [(-0.13, 0.1), (0.03, -0.1)],
        },
        ActivityKind::IdleDrink => Body {
            center: Point::new(0.42, 0.56),
            size: (0.33, 0.62),
            nose: (0.0, -0.25),
            eyes: -0.28,
            shoulders: (0.1, -0.15),
            elbows: [(-0.12, -0.02), (0.12, -0.05)],
            wrists: [(-0.13, 0.1), (0.04, -0.2)],
        },
        ActivityKind::IdleRead | ActivityKind::Absent => Body {
            center: Point::new(0.3, 0.6),
            size: (0.35, 0.6),
            nose: (0.0, -0.22),
            eyes: -0.25,
            shoulders: (0.1, -0.15),
            elbows: [(-0.11, -0.02), (0.11, -0.02)],
            wrists: [(-0.05, -0.07), (0.05, -0.07)],
        },
    }
}

/// Objects handled in each activity, as (class, offset from the body center).
fn objects_for(kind: ActivityKind, variant: u64) -> Vec<(ObjectClass, (f64, f64))> {
    match kind {
        ActivityKind::Building => vec![(ObjectClass::Tablet, (0.0, 0.12))],
        ActivityKind::IdlePhone => vec![(ObjectClass::CellPhone, (0.03, -0.1))],
        ActivityKind::IdleDrink => {
            let class = if variant % 2 == 0 { ObjectClass::Cup } else { ObjectClass::Bottle };
            vec![(class, (0.04, -0.2))]
        }
        ActivityKind::IdleRead => vec![(ObjectClass::Book, (0.0, -0.07))],
        ActivityKind::IdleCouch | ActivityKind::Absent => Vec::new(),
    }
}

/// Scene generator for one trial.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    pub config: SceneConfig,
    pub seed: u64,
}

impl SceneGenerator {
    pub fn new(config: SceneConfig, seed: u64) -> Self {
        Self { config, seed }
    }

    /// Records with `window.0 <= t < window.1`, in time order, with the
    /// participant activity supplied by `activity` (None = no scene).
    pub fn records_in<F>(&self, window: (f64, f64), activity: F) -> Vec<DetectionRecord>
    where
        F: Fn(f64) -> Option<ActivityKind>,
    {
        let (from, to) = window;
        let mut out = Vec::new();
        for kind in DetectorKind::ALL {
            let rate = self.config.rates.rate(kind);
            if rate <= 0.0 {
                continue;
            }
            let offset = kind.phase_offset();
            let first = ((from * rate - offset).ceil() as i64).max(0);
            let mut slot = first;
            loop {
                let t = (slot as f64 + offset) / rate;
                if t >= to {
                    break;
                }
                if t >= from {
                    if let Some(truth) = activity(t) {
                        self.emit(kind, slot, t, truth, &mut out);
                    }
                }
                slot += 1;
            }
        }
        out.sort_by(|a, b| a.t.total_cmp(&b.t));
        out
    }

    /// The activity a viewer would see at `t`: the true one unless `t` falls
    /// in an inconsistent episode.
    pub fn apparent_activity(&self, t: f64, truth: ActivityKind) -> ActivityKind {
        let noise = &self.config.noise;
        if truth == ActivityKind::Absent || noise.inconsistency <= 0.0 {
            return truth;
        }
        let min_len = noise.episode_min_s.max(1) as i64;
        let max_len = (noise.episode_max_s as i64).max(min_len);
        let mean_len = 0.5 * (min_len + max_len) as f64;
        let start_prob = (noise.inconsistency / mean_len).min(1.0);
        let cell = t.floor() as i64;
        for start in (cell - max_len + 1)..=cell {
            let mut r = rng::stream(self.seed, &[TAG_EPISODE, rng::index(start)]);
            if r.random::<f64>() >= start_prob {
                continue;
            }
            let len = r.random_range(min_len..=max_len);
            if start + len > cell {
                return if truth.is_idle() {
                    ActivityKind::Building
                } else {
                    ActivityKind::IDLE[r.random_range(0..ActivityKind::IDLE.len())]
                };
            }
        }
        truth
    }

    fn gaze_at(&self, t: f64, apparent: ActivityKind) -> Gaze {
        let block = (t / self.config.gaze_block_s).floor() as i64;
        let mut r = rng::stream(self.seed, &[TAG_GAZE, rng::index(block), apparent.code()]);
        if apparent == ActivityKind::Building {
            self.config.building_gaze.sample(&mut r)
        } else {
            self.config.idle_gaze.sample(&mut r)
        }
    }

    fn emit(
        &self,
        kind: DetectorKind,
        slot: i64,
        t: f64,
        truth: ActivityKind,
        out: &mut Vec<DetectionRecord>,
    ) {
        let noise = self.config.noise;
        let mut r = rng::stream(self.seed, &[TAG_RECORD, kind as u64, rng::index(slot)]);
        let jitter = Jitter::new(noise.jitter);
        let apparent = self.apparent_activity(t, truth);
        let present = truth != ActivityKind::Absent;
        let body = body_for(apparent);
        let c = body.center;

        match kind {
            DetectorKind::Person => {
                if !present || r.random::<f64>() < noise.dropout {
                    return;
                }
                let bbox = BBox {
                    cx: jitter.coord(&mut r, c.x),
                    cy: jitter.coord(&mut r, c.y),
                    w: body.size.0,
                    h: body.size.1,
                };
                out.push(DetectionRecord { t, detection: Detection::Person(PersonDetection { bbox }) });
            }
            DetectorKind::Face => {
                if !present || r.random::<f64>() < noise.dropout {
                    return;
                }
                let gaze = self.gaze_at(t, apparent);
                let e = Point::new(c.x + body.nose.0, c.y + body.eyes);
                let w = EYE_SPACING;
                let block = (t / self.config.gaze_block_s).floor() as u64;
                let side = if rng::derive_seed(self.seed, &[TAG_VARIANT, block]) % 2 == 0 { 1.0 } else { -1.0 };
                let (nx, ny) = match gaze {
                    Gaze::AtRobot => (0.0, NOSE_DROP_LEVEL),
                    Gaze::LeftRight => (side * NOSE_SHIFT_SIDE, NOSE_DROP_LEVEL),
                    Gaze::Down => (0.0, NOSE_DROP_DOWN),
                };
                let mut p = |x: f64, y: f64| Point::new(jitter.coord(&mut r, x), jitter.coord(&mut r, y));
                let face = FaceKeypoints {
                    left_eye: p(e.x - 0.5 * w, e.y),
                    right_eye: p(e.x + 0.5 * w, e.y),
                    nose: p(e.x + nx * w, e.y + ny * w),
                    mouth_left: p(e.x - 0.3 * w, e.y + 0.9 * w),
                    mouth_right: p(e.x + 0.3 * w, e.y + 0.9 * w),
                };
                out.push(DetectionRecord { t, detection: Detection::Face(Some(face)) });
            }
            DetectorKind::Object => {
                if !present {
                    return;
                }
                let variant = rng::derive_seed(self.seed, &[TAG_VARIANT, (t / 60.0).floor() as u64]);
                let mut objects: Vec<(ObjectClass, Point, bool)> = objects_for(apparent, variant)
                    .into_iter()
                    .map(|(class, (dx, dy))| (class, Point::new(c.x + dx, c.y + dy), true))
                    .collect();
                objects.extend(CLUTTER.iter().map(|&(class, p)| (class, p, true)));
                for (class, at, counted) in objects {
                    if r.random::<f64>() < noise.dropout {
                        continue;
                    }
                    let bbox = BBox {
                        cx: jitter.coord(&mut r, at.x),
                        cy: jitter.coord(&mut r, at.y),
                        w: 0.06,
                        h: 0.05,
                    };
                    out.push(DetectionRecord {
                        t,
                        detection: Detection::Object(ObjectDetection { class, bbox, counted }),
                    });
                }
            }
            DetectorKind::Pose => {
                if !present || r.random::<f64>() < noise.dropout {
                    return;
                }
                let gaze = self.gaze_at(t, apparent);
                let head_shift = match gaze {
                    Gaze::LeftRight => 0.02,
                    _ => 0.0,
                };
                let head_drop = match gaze {
                    Gaze::Down => 0.02,
                    _ => 0.0,
                };
                let noiseless = noise.is_noiseless();
                let low_conf = 0.5 * noise.dropout;
                let mut kp = |dx: f64, dy: f64| {
                    let confidence = if noiseless {
                        1.0
                    } else if r.random::<f64>() < low_conf {
                        r.random_range(0.0..0.2)
                    } else {
                        r.random_range(0.6..1.0)
                    };
                    Keypoint {
                        x: jitter.coord(&mut r, c.x + dx),
                        y: jitter.coord(&mut r, c.y + dy),
                        confidence,
                    }
                };
                let (sx, sy) = body.shoulders;
                let pose = PoseKeypoints {
                    nose: kp(body.nose.0 + head_shift, body.nose.1 + head_drop),
                    left_eye: kp(-0.025, body.eyes),
                    right_eye: kp(0.025, body.eyes),
                    left_shoulder: kp(-sx, sy),
                    right_shoulder: kp(sx, sy),
                    left_elbow: kp(body.elbows[0].0, body.elbows[0].1),
                    right_elbow: kp(body.elbows[1].0, body.elbows[1].1),
                    left_wrist: kp(body.wrists[0].0, body.wrists[0].1),
                    right_wrist: kp(body.wrists[1].0, body.wrists[1].1),
                };
                out.push(DetectionRecord { t, detection: Detection::Pose(pose) });
            }
        }
    }
}

struct Jitter(Option<Normal<f64>>);

impl Jitter {
    fn new(sd: f64) -> Self {
        Jitter(if sd > 0.0 { Normal::new(0.0, sd).ok() } else { None })
    }

    fn coord<R: Rng>(&self, r: &mut R, v: f64) -> f64 {
        match &self.0 {
            Some(n) => (v + n.sample(r)).clamp(0.0, 1.0),
            None => v,
        }
    }
}

/// Labels on the grid `start, start + dt, ...` for every phase in order.
pub fn ground_truth_labels(phases: &[ActivityPhase], tick_rate: f64) -> Vec<GroundTruthLabel> {
    tick_grid(phases, tick_rate)
        .into_iter()
        .filter_map(|t| {
            phase_at(phases, t).map(|k| GroundTruthLabel { t, interruptible: k.interruptible() as u8 })
        })
        .collect()
}

/// Tick times covering `[first.start, last.end)` at `tick_rate`.
pub fn tick_grid(phases: &[ActivityPhase], tick_rate: f64) -> Vec<f64> {
    let (Some(first), Some(last)) = (phases.first(), phases.last()) else {
        return Vec::new();
    };
    let dt = 1.0 / tick_rate;
    let n = ((last.end - first.start) / dt - 1e-9).ceil().max(0.0) as usize;
    (0..n).map(|k| first.start + k as f64 * dt).collect()
}

/// Detection log and 2 Hz labels for a whole phase timeline.
pub fn generate_trial_scene(
    phases: &[ActivityPhase],
    noise: &NoiseConfig,
    seed: u64,
) -> Result<(Vec<DetectionRecord>, Vec<GroundTruthLabel>), SceneError> {
    let config = SceneConfig { noise: *noise, ..SceneConfig::default() };
    generate_with(phases, &config, seed)
}

pub fn generate_with(
    phases: &[ActivityPhase],
    config: &SceneConfig,
    seed: u64,
) -> Result<(Vec<DetectionRecord>, Vec<GroundTruthLabel>), SceneError> {
    validate_phases(phases)?;
    config.noise.validate()?;
    let generator = SceneGenerator::new(*config, seed);
    let log = match (phases.first(), phases.last()) {
        (Some(first), Some(last)) => {
            generator.records_in((first.start, last.end), |t| phase_at(phases, t))
        }
        _ => Vec::new(),
    };
    Ok((log, ground_truth_labels(phases, 2.0)))
}

/// Shape of the alternating build/leisure scripts used as classifier
/// training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptConfig {
    pub duration_s: f64,
    pub build_s: (f64, f64),
    pub idle_s: (f64, f64),
    /// Probability that a build segment contains a short out-of-view trip.
    pub absent_prob: f64,
    pub absent_s: (f64, f64),
}

impl Default for ScriptConfig {
    fn default() -> Self {
        Self {
            duration_s: 600.0,
            build_s: (60.0, 180.0),
            idle_s: (30.0, 120.0),
            absent_prob: 0.0,
            absent_s: (5.0, 15.0),
        }
    }
}

/// Weights of the leisure behaviours observed during breaks (couch, phone,
/// drink, read).
pub const LEISURE_WEIGHTS: [f64; 4] = [0.64, 0.50, 0.40, 0.14];

pub fn sample_leisure<R: Rng>(r: &mut R, weights: &[f64; 4]) -> ActivityKind {
    let total: f64 = weights.iter().sum();
    let mut u = r.random::<f64>() * total;
    for (k, w) in ActivityKind::IDLE.iter().zip(weights) {
        if u < *w {
            return *k;
        }
        u -= w;
    }
    ActivityKind::IdleCouch
}

/// A random alternating build/idle timeline starting at 0.
pub fn random_script(cfg: &ScriptConfig, seed: u64) -> Vec<ActivityPhase> {
    let mut r = rng::stream(seed, &[0x5C]);
    let mut phases = Vec::new();
    let mut t = 0.0;
    let mut building = r.random_bool(0.5);
    while t < cfg.duration_s {
        if building {
            let len = r.random_range(cfg.build_s.0..=cfg.build_s.1);
            let end = (t + len).min(cfg.duration_s);
            if cfg.absent_prob > 0.0 && r.random::<f64>() < cfg.absent_prob && end - t > cfg.absent_s.1 + 2.0 {
                let gap = r.random_range(cfg.absent_s.0..=cfg.absent_s.1);
                let at = r.random_range(t + 1.0..end - gap - 1.0);
                phases.push(ActivityPhase::new(ActivityKind::Building, t, at));
                phases.push(ActivityPhase::new(ActivityKind::Absent, at, at + gap));
                phases.push(ActivityPhase::new(ActivityKind::Building, at + gap, end));
            } else {
                phases.push(ActivityPhase::new(ActivityKind::Building, t, end));
            }
            t = end;
        } else {
            let len = r.random_range(cfg.idle_s.0..=cfg.idle_s.1);
            let end = (t + len).min(cfg.duration_s);
            // Leisure segments switch behaviour every 20-60 s.
            while t < end {
                let seg = r.random_range(20.0..60.0_f64).min(end - t);
                let kind = sample_leisure(&mut r, &LEISURE_WEIGHTS);
                phases.push(ActivityPhase::new(kind, t, t + seg));
                t += seg;
            }
            t = end;
        }
        building = !building;
    }
    phases
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(start: f64, end: f64) -> ActivityPhase {
        ActivityPhase::new(ActivityKind::Building, start, end)
    }

    #[test]
    fn noiseless_build_has_tablet_and_zero_labels() {
        let phases = [build(0.0, 10.0)];
        let (log, labels) = generate_trial_scene(&phases, &NoiseConfig::none(), 3).unwrap();
        assert_eq!(labels.len(), 20);
        assert!(labels.iter().all(|l| l.interruptible == 0));
        let object_times: std::collections::BTreeSet<u64> = log
            .iter()
            .filter(|r| r.detection.kind() == DetectorKind::Object)
            .map(|r| r.t.to_bits())
            .collect();
        assert!(!object_times.is_empty());
        for bits in object_times {
            let t = f64::from_bits(bits);
            assert!(log.iter().any(|r| r.t == t
                && matches!(&r.detection, Detection::Object(o) if o.class == ObjectClass::Tablet)));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let phases = random_script(&ScriptConfig::default(), 11);
        let a = generate_trial_scene(&phases, &NoiseConfig::moderate(), 5).unwrap();
        let b = generate_trial_scene(&phases, &NoiseConfig::moderate(), 5).unwrap();
        assert_eq!(serde_json::to_string(&a.0).unwrap(), serde_json::to_string(&b.0).unwrap());
        let c = generate_trial_scene(&phases, &NoiseConfig::moderate(), 6).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn pose_dropout_count_is_binomial() {
        let phases = [build(0.0, 100.0)];
        let noise = NoiseConfig { dropout: 0.5, ..NoiseConfig::none() };
        let (log, _) = generate_trial_scene(&phases, &noise, 99).unwrap();
        let n = log.iter().filter(|r| r.detection.kind() == DetectorKind::Pose).count() as f64;
        // Binomial(600, 0.5): mean 300, sd sqrt(150).
        let sd = (600.0f64 * 0.25).sqrt();
        assert!((n - 300.0).abs() <= 3.0 * sd, "pose count {n}");
    }

    #[test]
    fn rates_match_nominal_without_dropout() {
        let phases = [build(0.0, 200.0)];
        let (log, _) = generate_trial_scene(&phases, &NoiseConfig::none(), 1).unwrap();
        let rates = DetectorRates::default();
        for kind in [DetectorKind::Person, DetectorKind::Face, DetectorKind::Pose] {
            let n = log.iter().filter(|r| r.detection.kind() == kind).count() as f64;
            let expected = rates.rate(kind) * 200.0;
            assert!((n - expected).abs() <= 0.1 * expected, "{kind:?}: {n} vs {expected}");
        }
        let passes: std::collections::BTreeSet<u64> = log
            .iter()
            .filter(|r| r.detection.kind() == DetectorKind::Object)
            .map(|r| r.t.to_bits())
            .collect();
        assert!((passes.len() as f64 - 2400.0).abs() <= 240.0);
    }

    #[test]
    fn absent_emits_no_person_face_or_pose() {
        let phases = [ActivityPhase::new(ActivityKind::Absent, 0.0, 20.0)];
        let (log, labels) = generate_trial_scene(&phases, &NoiseConfig::moderate(), 2).unwrap();
        assert!(log.iter().all(|r| r.detection.kind() == DetectorKind::Object));
        assert!(labels.iter().all(|l| l.interruptible == 0));
    }

    #[test]
    fn rejects_overlapping_phases() {
        let phases = [build(0.0, 10.0), ActivityPhase::new(ActivityKind::IdleCouch, 9.0, 20.0)];
        assert!(matches!(
            generate_trial_scene(&phases, &NoiseConfig::none(), 0),
            Err(SceneError::Overlap { index: 1, .. })
        ));
    }

    #[test]
    fn windowed_generation_matches_whole_trial() {
        let phases = random_script(&ScriptConfig::default(), 4);
        let g = SceneGenerator::new(SceneConfig::default(), 8);
        let whole = g.records_in((0.0, 600.0), |t| phase_at(&phases, t));
        let mut pieces = Vec::new();
        let mut t = 0.0;
        while t < 600.0 {
            pieces.extend(g.records_in((t, t + 0.5), |x| phase_at(&phases, x)));
            t += 0.5;
        }
        assert_eq!(whole, pieces);
    }

    #[test]
    fn labels_follow_phases() {
        let phases = random_script(&ScriptConfig { absent_prob: 0.5, ..Default::default() }, 21);
        for label in ground_truth_labels(&phases, 2.0) {
            let kind = phase_at(&phases, label.t).unwrap();
            let zero = matches!(kind, ActivityKind::Building | ActivityKind::Absent);
            assert_eq!(label.interruptible == 0, zero);
        }
    }

    #[test]
    fn inconsistency_fraction_tracks_config() {
        let g = SceneGenerator::new(SceneConfig::default(), 17);
        let n = 20_000;
        let flipped = (0..n)
            .filter(|&i| g.apparent_activity(i as f64 + 0.5, ActivityKind::Building) != ActivityKind::Building)
            .count() as f64
            / n as f64;
        let target = NoiseConfig::moderate().inconsistency;
        assert!((flipped - target).abs() < 0.4 * target, "flipped {flipped}");
    }
}
