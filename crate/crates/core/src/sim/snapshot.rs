//! Observable scene state for the wizard feed. Deliberately carries no
//! activity or interruptibility fields.

use serde::{Deserialize, Serialize};

use crate::features::{field, FeatureFrame};
use crate::scene::{BBox, Detection, DetectionRecord, Gaze, ObjectClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotState {
    ToObservation,
    Observing,
    Approaching,
    Requesting,
    WaitingForBuild,
    Returning,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub state: RobotState,
    pub entry: usize,
    /// A wizard signal has been honored (or is pending) this entry.
    pub latched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSummary {
    pub nose_vec: [f64; 2],
    /// Left/right elbow, wrist, shoulder, eye, in frame-field order; null
    /// where the keypoints were not confident enough.
    pub angles: [Option<f64>; 8],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub class: ObjectClass,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub t_scene: f64,
    pub person: Option<BBox>,
    pub gaze: Option<Gaze>,
    pub pose: Option<PoseSummary>,
    pub objects: Vec<ObjectView>,
    pub tablet_present: bool,
    /// Null when replaying a recorded log.
    pub robot: Option<RobotView>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl SceneSnapshot {
    /// `records` are the latest tick window; `frame` is its fused frame.
    pub fn from_window(t: f64, records: &[DetectionRecord], frame: &FeatureFrame, robot: Option<RobotView>) -> Self {
        let person = records.iter().rev().find_map(|r| match &r.detection {
            Detection::Person(p) => Some(p.bbox),
            _ => None,
        });
        let last_objects = records
            .iter()
            .filter(|r| matches!(r.detection, Detection::Object(_)))
            .map(|r| r.t)
            .max_by(f64::total_cmp);
        let objects: Vec<ObjectView> = records
            .iter()
            .filter(|r| Some(r.t) == last_objects)
            .filter_map(|r| match &r.detection {
                Detection::Object(o) => Some(ObjectView { class: o.class, bbox: o.bbox }),
                _ => None,
            })
            .collect();
        let v = &frame.values;
        let pose = match (finite(v[field::NOSE_VEC_X]), finite(v[field::NOSE_VEC_Y])) {
            (Some(x), Some(y)) => {
                let mut angles = [None; 8];
                for (a, x) in angles.iter_mut().zip(&v[field::ANGLE_L_ELBOW..=field::ANGLE_R_EYE]) {
                    *a = finite(*x);
                }
                Some(PoseSummary { nose_vec: [x, y], angles })
            }
            _ => None,
        };
        Self {
            t_scene: t,
            person,
            gaze: frame.gaze(),
            pose,
            tablet_present: frame.is_valid(field::TABLET) && v[field::TABLET] > 0.0,
            objects,
            robot,
        }
    }
}
