//! Association of detector records to the participant and assembly of the
//! standard frame at each classifier tick.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{field, FeatureFrame, STANDARD_FIELDS};
use crate::scene::{
    BBox, Detection, DetectionRecord, FaceKeypoints, Gaze, Keypoint, ObjectClass, Point, PoseKeypoints,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub tick_rate: f64,
    /// Max distance from a person box center to a face or pose anchor.
    pub association_radius: f64,
    /// Max distance from an object center to the person box.
    pub object_attach_radius: f64,
    pub imputation_horizon: f64,
    /// Nose drop below the eye line, in inter-eye distances, beyond which
    /// gaze is `DOWN`.
    pub gaze_down_threshold: f64,
    /// Horizontal nose offset, in inter-eye distances, beyond which gaze is
    /// `LEFT_RIGHT`.
    pub gaze_side_threshold: f64,
    /// Keypoints below this confidence are ignored.
    pub min_keypoint_confidence: f64,
    /// Per-class count ceiling.
    pub max_count: u32,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tick_rate: 2.0,
            association_radius: 0.35,
            object_attach_radius: 0.25,
            imputation_horizon: 4.0,
            gaze_down_threshold: 0.45,
            gaze_side_threshold: 0.25,
            min_keypoint_confidence: 0.2,
            max_count: 5,
        }
    }
}

impl FusionConfig {
    pub fn tick_period(&self) -> f64 {
        1.0 / self.tick_rate
    }
}

/// Gaze from facial keypoints; `None` when the eyes coincide.
pub fn gaze_from_face(face: &FaceKeypoints, cfg: &FusionConfig) -> Option<Gaze> {
    let e = face.left_eye.midpoint(face.right_eye);
    let w = face.left_eye.dist(face.right_eye);
    if !(w > 0.0) {
        return None;
    }
    let n = face.nose;
    Some(if (n.y - e.y) / w > cfg.gaze_down_threshold {
        Gaze::Down
    } else if (n.x - e.x).abs() / w > cfg.gaze_side_threshold {
        Gaze::LeftRight
    } else {
        Gaze::AtRobot
    })
}

/// Unsigned angle at `vertex` between the rays to `a` and `b`, in `[0, π]`.
pub fn joint_angle(a: Point, vertex: Point, b: Point) -> f64 {
    let (ux, uy) = (a.x - vertex.x, a.y - vertex.y);
    let (vx, vy) = (b.x - vertex.x, b.y - vertex.y);
    let cross = ux * vy - uy * vx;
    let dot = ux * vx + uy * vy;
    cross.abs().atan2(dot)
}

fn direction(from: Point, to: Point) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

/// Index of the person, among `persons`, whose box center is nearest `p`.
fn nearest_person(persons: &[BBox], p: Point) -> Option<(usize, f64)> {
    persons
        .iter()
        .enumerate()
        .map(|(i, b)| (i, b.center().dist(p)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn pose_anchor(pose: &PoseKeypoints) -> Point {
    pose.left_shoulder.point().midpoint(pose.right_shoulder.point())
}

fn pose_features(pose: &PoseKeypoints, cfg: &FusionConfig, out: &mut [f64]) {
    let ok = |k: &Keypoint| k.confidence >= cfg.min_keypoint_confidence;
    let (ls, rs) = (&pose.left_shoulder, &pose.right_shoulder);
    if ok(&pose.nose) && ok(ls) && ok(rs) {
        let width = ls.point().dist(rs.point());
        if width > 0.0 {
            let mid = ls.point().midpoint(rs.point());
            out[field::NOSE_VEC_X] = (pose.nose.x - mid.x) / width;
            out[field::NOSE_VEC_Y] = (pose.nose.y - mid.y) / width;
        }
    }
    let sides = [
        (ls, rs, &pose.left_elbow, &pose.left_wrist, &pose.left_eye, 0),
        (rs, ls, &pose.right_elbow, &pose.right_wrist, &pose.right_eye, 1),
    ];
    for (shoulder, other, elbow, wrist, eye, side) in sides {
        if ok(shoulder) && ok(elbow) && ok(wrist) {
            out[field::ANGLE_L_ELBOW + side] = joint_angle(shoulder.point(), elbow.point(), wrist.point());
        }
        if ok(elbow) && ok(wrist) {
            out[field::ANGLE_L_WRIST + side] = direction(elbow.point(), wrist.point());
        }
        if ok(shoulder) && ok(other) && ok(elbow) {
            out[field::ANGLE_L_SHOULDER + side] = joint_angle(other.point(), shoulder.point(), elbow.point());
        }
        if ok(eye) && ok(&pose.nose) {
            out[field::ANGLE_L_EYE + side] = direction(eye.point(), pose.nose.point());
        }
    }
}

fn object_slot(class: ObjectClass) -> usize {
    match class {
        ObjectClass::Book => field::OBJECTS,
        ObjectClass::Bottle => field::OBJECTS + 1,
        ObjectClass::Bowl => field::OBJECTS + 2,
        ObjectClass::Cup => field::OBJECTS + 3,
        ObjectClass::Laptop => field::OBJECTS + 4,
        ObjectClass::CellPhone => field::OBJECTS + 5,
        ObjectClass::Tablet => field::TABLET,
    }
}

/// Builds the frame at tick `t` from the records of one tick window. The
/// caller supplies only records with timestamps in `(t - period, t]`.
pub fn fuse_window(window: &[DetectionRecord], t: f64, cfg: &FusionConfig) -> FeatureFrame {
    let mut values = vec![f64::NAN; STANDARD_FIELDS.len()];

    // Latest person detector pass; the participant is the person nearest
    // the image center.
    let Some(t_person) = window
        .iter()
        .filter(|r| matches!(r.detection, Detection::Person(_)))
        .map(|r| r.t)
        .max_by(f64::total_cmp)
    else {
        return FeatureFrame::new(t, values);
    };
    let persons: Vec<BBox> = window
        .iter()
        .filter(|r| r.t == t_person)
        .filter_map(|r| match &r.detection {
            Detection::Person(p) => Some(p.bbox),
            _ => None,
        })
        .collect();
    let (me, _) = nearest_person(&persons, Point::new(0.5, 0.5)).expect("at least one person");
    let attached = |p: Point, radius: f64| {
        matches!(nearest_person(&persons, p), Some((i, d)) if i == me && d <= radius)
    };

    if let Some(gaze) = window
        .iter()
        .rev()
        .filter_map(|r| match &r.detection {
            Detection::Face(Some(face)) => Some(face),
            _ => None,
        })
        .find(|face| attached(face.left_eye.midpoint(face.right_eye), cfg.association_radius))
        .and_then(|face| gaze_from_face(face, cfg))
    {
        let hot = match gaze {
            Gaze::AtRobot => field::GAZE_AT_ROBOT,
            Gaze::LeftRight => field::GAZE_LEFT_RIGHT,
            Gaze::Down => field::GAZE_DOWN,
        };
        for i in field::GAZE_AT_ROBOT..=field::GAZE_DOWN {
            values[i] = (i == hot) as u8 as f64;
        }
    }

    // Counts are known whenever the person is (the object detector runs on
    // person crops); per class, the largest count over the window's passes.
    let mut passes: BTreeMap<u64, [u32; 7]> = BTreeMap::new();
    let me_box = persons[me];
    for r in window {
        if let Detection::Object(o) = &r.detection {
            if !o.counted {
                continue;
            }
            let c = o.bbox.center();
            let nearest_ok = matches!(nearest_person(&persons, c), Some((i, _)) if i == me);
            if nearest_ok && me_box.distance_to(c) <= cfg.object_attach_radius {
                let idx = ObjectClass::ALL.iter().position(|k| *k == o.class).unwrap();
                passes.entry(r.t.to_bits()).or_default()[idx] += 1;
            }
        }
    }
    for (idx, class) in ObjectClass::ALL.iter().enumerate() {
        let n = passes.values().map(|p| p[idx]).max().unwrap_or(0).min(cfg.max_count);
        values[object_slot(*class)] = n as f64;
    }

    if let Some(pose) = window
        .iter()
        .rev()
        .filter_map(|r| match &r.detection {
            Detection::Pose(p) => Some(p),
            _ => None,
        })
        .find(|p| attached(pose_anchor(p), cfg.association_radius))
    {
        pose_features(pose, cfg, &mut values);
    }

    FeatureFrame::new(t, values)
}

/// One frame per tick from 0 through the last record. `log` must be time
/// ordered.
pub fn fuse(log: &[DetectionRecord], cfg: &FusionConfig) -> Vec<FeatureFrame> {
    let Some(last) = log.last() else {
        return Vec::new();
    };
    let dt = cfg.tick_period();
    let n = (last.t / dt).ceil() as usize + 1;
    let ticks: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    fuse_on_grid(log, cfg, &ticks)
}

/// Frames at the given increasing tick times.
pub fn fuse_on_grid(log: &[DetectionRecord], cfg: &FusionConfig, ticks: &[f64]) -> Vec<FeatureFrame> {
    let mut fuser = StreamingFuser::new(*cfg);
    let mut next = 0;
    ticks
        .iter()
        .map(|&t| {
            while next < log.len() && log[next].t <= t {
                fuser.push(log[next].clone());
                next += 1;
            }
            fuser.frame_at(t)
        })
        .collect()
}

/// Incremental fusion over an ordered record stream. Only the records of
/// the most recent tick period are retained.
#[derive(Debug, Clone)]
pub struct StreamingFuser {
    cfg: FusionConfig,
    recent: VecDeque<DetectionRecord>,
}

impl StreamingFuser {
    pub fn new(cfg: FusionConfig) -> Self {
        Self { cfg, recent: VecDeque::new() }
    }

    pub fn push(&mut self, record: DetectionRecord) {
        self.recent.push_back(record);
    }

    /// Frame at tick `t`; records at or before `t - period` are discarded.
    pub fn frame_at(&mut self, t: f64) -> FeatureFrame {
        let from = t - self.cfg.tick_period();
        while self.recent.front().is_some_and(|r| r.t <= from) {
            self.recent.pop_front();
        }
        let window: Vec<DetectionRecord> = self.recent.iter().filter(|r| r.t <= t).cloned().collect();
        fuse_window(&window, t, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::*;
    use std::f64::consts::PI;

    fn person(t: f64, cx: f64, cy: f64) -> DetectionRecord {
        DetectionRecord {
            t,
            detection: Detection::Person(PersonDetection { bbox: BBox { cx, cy, w: 0.3, h: 0.6 } }),
        }
    }

    fn object(t: f64, class: ObjectClass, x: f64, y: f64) -> DetectionRecord {
        DetectionRecord {
            t,
            detection: Detection::Object(ObjectDetection {
                class,
                bbox: BBox { cx: x, cy: y, w: 0.05, h: 0.05 },
                counted: true,
            }),
        }
    }

    #[test]
    fn tablet_inside_person_box() {
        let window = [person(0.1, 0.5, 0.5), object(0.2, ObjectClass::Tablet, 0.5, 0.6)];
        let f = fuse_window(&window, 0.5, &FusionConfig::default());
        assert_eq!(f.values[field::TABLET], 1.0);
        for i in field::OBJECTS..field::TABLET {
            assert_eq!(f.values[i], 0.0);
        }
        assert!(f.gaze().is_none());
        assert!((field::NOSE_VEC_X..=field::ANGLE_R_EYE).all(|i| !f.is_valid(i)));
    }

    #[test]
    fn no_person_means_every_field_invalid() {
        let window = [object(0.2, ObjectClass::Tablet, 0.5, 0.6)];
        let f = fuse_window(&window, 0.5, &FusionConfig::default());
        assert!(f.is_empty());
    }

    #[test]
    fn straight_arm_has_elbow_angle_pi() {
        let a = joint_angle(Point::new(0.4, 0.5), Point::new(0.5, 0.5), Point::new(0.6, 0.5));
        assert!((a - PI).abs() < 1e-9);
        let right = joint_angle(Point::new(0.5, 0.4), Point::new(0.5, 0.5), Point::new(0.6, 0.5));
        assert!((right - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn straight_arm_through_pose_record() {
        let k = |x, y| Keypoint { x, y, confidence: 1.0 };
        let pose = PoseKeypoints {
            nose: k(0.5, 0.3),
            left_eye: k(0.49, 0.28),
            right_eye: k(0.51, 0.28),
            left_shoulder: k(0.4, 0.5),
            right_shoulder: k(0.55, 0.5),
            left_elbow: k(0.5, 0.5),
            right_elbow: k(0.6, 0.55),
            left_wrist: k(0.6, 0.5),
            right_wrist: k(0.6, 0.65),
        };
        let window = [person(0.1, 0.5, 0.5), DetectionRecord { t: 0.3, detection: Detection::Pose(pose) }];
        let f = fuse_window(&window, 0.5, &FusionConfig::default());
        assert!((f.values[field::ANGLE_L_ELBOW] - PI).abs() < 1e-9);
        assert_eq!(f.values[field::ANGLE_L_WRIST], 0.0);
        assert!(f.values.iter().skip(field::NOSE_VEC_X).all(|v| v.is_finite()));
    }

    #[test]
    fn low_confidence_keypoints_invalidate_angles() {
        let k = |x, y, c| Keypoint { x, y, confidence: c };
        let pose = PoseKeypoints {
            nose: k(0.5, 0.3, 1.0),
            left_eye: k(0.49, 0.28, 1.0),
            right_eye: k(0.51, 0.28, 1.0),
            left_shoulder: k(0.4, 0.5, 1.0),
            right_shoulder: k(0.6, 0.5, 1.0),
            left_elbow: k(0.35, 0.6, 0.1),
            right_elbow: k(0.65, 0.6, 1.0),
            left_wrist: k(0.35, 0.7, 1.0),
            right_wrist: k(0.65, 0.7, 1.0),
        };
        let window = [person(0.1, 0.5, 0.5), DetectionRecord { t: 0.3, detection: Detection::Pose(pose) }];
        let f = fuse_window(&window, 0.5, &FusionConfig::default());
        assert!(!f.is_valid(field::ANGLE_L_ELBOW));
        assert!(!f.is_valid(field::ANGLE_L_WRIST));
        assert!(!f.is_valid(field::ANGLE_L_SHOULDER));
        assert!(f.is_valid(field::ANGLE_R_ELBOW));
    }

    #[test]
    fn frame_describes_person_nearest_center() {
        let window = [
            person(0.1, 0.15, 0.5),
            person(0.1, 0.55, 0.5),
            object(0.2, ObjectClass::CellPhone, 0.15, 0.5),
            object(0.2, ObjectClass::Book, 0.55, 0.5),
        ];
        let f = fuse_window(&window, 0.5, &FusionConfig::default());
        assert_eq!(f.values[field::OBJECTS], 1.0);
        assert_eq!(f.values[field::OBJECTS + 5], 0.0);
    }

    #[test]
    fn counts_saturate() {
        let mut window = vec![person(0.1, 0.5, 0.5)];
        window.extend((0..8).map(|_| object(0.2, ObjectClass::Cup, 0.5, 0.5)));
        let f = fuse_window(&window, 0.5, &FusionConfig::default());
        assert_eq!(f.values[field::OBJECTS + 3], 5.0);
    }

    #[test]
    fn noiseless_gaze_round_trips() {
        let cfg = SceneConfig { noise: NoiseConfig::none(), ..Default::default() };
        let g = SceneGenerator::new(cfg, 5);
        let mut seen = std::collections::HashSet::new();
        for rec in g.records_in((0.0, 200.0), |_| Some(ActivityKind::IdleCouch)) {
            if let Detection::Face(Some(face)) = rec.detection {
                let got = gaze_from_face(&face, &FusionConfig::default()).unwrap();
                seen.insert(got);
            }
        }
        assert_eq!(seen.len(), 3);
        // Per-record check against the generator's own gaze draw.
        for rec in g.records_in((0.0, 60.0), |_| Some(ActivityKind::IdleCouch)) {
            if let Detection::Face(Some(face)) = rec.detection {
                let e = face.left_eye.midpoint(face.right_eye);
                let w = face.left_eye.dist(face.right_eye);
                let expected = if (face.nose.y - e.y) / w > 0.5 {
                    Gaze::Down
                } else if (face.nose.x - e.x).abs() / w > 0.3 {
                    Gaze::LeftRight
                } else {
                    Gaze::AtRobot
                };
                assert_eq!(gaze_from_face(&face, &FusionConfig::default()), Some(expected));
            }
        }
    }

    #[test]
    fn fusion_is_causal() {
        let phases = random_script(&ScriptConfig::default(), 2);
        let (log, _) = generate_trial_scene(&phases, &NoiseConfig::moderate(), 3).unwrap();
        let cfg = FusionConfig::default();
        let full = fuse(&log, &cfg);
        let cut = 100.0;
        let truncated: Vec<_> = log.iter().filter(|r| r.t <= cut).cloned().collect();
        let ticks: Vec<f64> = full.iter().map(|f| f.t).filter(|&t| t <= cut).collect();
        let partial = fuse_on_grid(&truncated, &cfg, &ticks);
        for (a, b) in partial.iter().zip(&full) {
            assert_eq!(format!("{a:?}"), format!("{b:?}"));
        }
    }

    #[test]
    fn noiseless_build_frames_see_tablet() {
        let phases = [ActivityPhase::new(ActivityKind::Building, 0.0, 30.0)];
        let (log, _) = generate_trial_scene(&phases, &NoiseConfig::none(), 1).unwrap();
        let frames = fuse(&log, &FusionConfig::default());
        for f in frames.iter().skip(1).take(58) {
            assert_eq!(f.values[field::TABLET], 1.0, "t={}", f.t);
            assert_eq!(f.gaze().map(|g| g != Gaze::AtRobot), Some(true));
            assert!(f.values[field::OBJECTS..field::TABLET].iter().all(|&c| c == 0.0));
        }
    }
}
