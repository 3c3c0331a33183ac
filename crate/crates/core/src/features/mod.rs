//! Per-tick feature frames: fusion of asynchronous detector records,
//! last-value imputation and max-abs normalization.

mod fusion;
mod io;
mod normalize;

pub use fusion::{fuse, fuse_on_grid, fuse_window, gaze_from_face, joint_angle, FusionConfig, StreamingFuser};
pub use io::{read_frames_csv, write_frames_csv, FrameIoError};
pub use normalize::{fit_normalizer, normalize, NormalizationConstants, NormalizeError};

use serde::{Deserialize, Serialize};

use crate::scene::Gaze;

/// Column names of the standard 20-field frame, in storage order.
pub const STANDARD_FIELDS: [&str; 20] = [
    "gaze_at_robot",
    "gaze_left_right",
    "gaze_down",
    "book",
    "bottle",
    "bowl",
    "cup",
    "laptop",
    "cell_phone",
    "tablet",
    "nose_vec_x",
    "nose_vec_y",
    "angle_l_elbow",
    "angle_r_elbow",
    "angle_l_wrist",
    "angle_r_wrist",
    "angle_l_shoulder",
    "angle_r_shoulder",
    "angle_l_eye",
    "angle_r_eye",
];

/// Indices into the standard frame.
pub mod field {
    pub const GAZE_AT_ROBOT: usize = 0;
    pub const GAZE_LEFT_RIGHT: usize = 1;
    pub const GAZE_DOWN: usize = 2;
    /// First of the six object counts (book, bottle, bowl, cup, laptop, cell phone).
    pub const OBJECTS: usize = 3;
    pub const TABLET: usize = 9;
    pub const NOSE_VEC_X: usize = 10;
    pub const NOSE_VEC_Y: usize = 11;
    pub const ANGLE_L_ELBOW: usize = 12;
    pub const ANGLE_R_ELBOW: usize = 13;
    pub const ANGLE_L_WRIST: usize = 14;
    pub const ANGLE_R_WRIST: usize = 15;
    pub const ANGLE_L_SHOULDER: usize = 16;
    pub const ANGLE_R_SHOULDER: usize = 17;
    pub const ANGLE_L_EYE: usize = 18;
    pub const ANGLE_R_EYE: usize = 19;
}

/// Ordered field names of a frame layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub fields: Vec<String>,
}

impl FeatureSchema {
    pub fn standard() -> Self {
        Self { fields: STANDARD_FIELDS.iter().map(|s| s.to_string()).collect() }
    }

    /// Anonymous schema `f0..f{n-1}`, handy for small test problems.
    pub fn anonymous(n: usize) -> Self {
        Self { fields: (0..n).map(|i| format!("f{i}")).collect() }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// One classifier tick. Invalid fields hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub t: f64,
    pub values: Vec<f64>,
}

impl FeatureFrame {
    pub fn new(t: f64, values: Vec<f64>) -> Self {
        Self { t, values }
    }

    /// A frame with every field invalid.
    pub fn missing(t: f64, len: usize) -> Self {
        Self { t, values: vec![f64::NAN; len] }
    }

    pub fn is_valid(&self, i: usize) -> bool {
        !self.values[i].is_nan()
    }

    pub fn validity_mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| !v.is_nan()).collect()
    }

    /// True when no field is valid, i.e. no person was seen.
    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|v| v.is_nan())
    }

    /// Decoded gaze of a standard frame; `None` when missing.
    pub fn gaze(&self) -> Option<Gaze> {
        let v = &self.values;
        if v.len() < 3 || v[..3].iter().any(|x| x.is_nan()) {
            return None;
        }
        [Gaze::AtRobot, Gaze::LeftRight, Gaze::Down]
            .into_iter()
            .zip(&v[..3])
            .filter(|(_, x)| **x > 0.0)
            .map(|(g, _)| g)
            .next()
    }
}

/// Streaming last-valid-value imputation. Feeding frames one by one gives
/// the same output as [`impute`] over the whole sequence.
#[derive(Debug, Clone)]
pub struct Imputer {
    horizon: f64,
    last: Vec<Option<(f64, f64)>>,
}

impl Imputer {
    pub fn new(width: usize, horizon: f64) -> Self {
        Self { horizon, last: vec![None; width] }
    }

    pub fn reset(&mut self) {
        self.last.iter_mut().for_each(|s| *s = None);
    }

    pub fn push(&mut self, frame: &FeatureFrame) -> FeatureFrame {
        let mut out = frame.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            if v.is_nan() {
                if let Some((t_valid, value)) = self.last[i] {
                    if frame.t - t_valid <= self.horizon {
                        *v = value;
                    }
                }
            } else {
                self.last[i] = Some((frame.t, *v));
            }
        }
        out
    }
}

/// Fills each invalid field with the latest valid value of the same field
/// when that value is at most `horizon` seconds old.
pub fn impute(frames: &[FeatureFrame], horizon: f64) -> Vec<FeatureFrame> {
    let Some(first) = frames.first() else {
        return Vec::new();
    };
    let mut imputer = Imputer::new(first.values.len(), horizon);
    frames.iter().map(|f| imputer.push(f)).collect()
}
