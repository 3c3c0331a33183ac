//! Live classification over a fixed-size ring buffer.

use std::collections::VecDeque;
use std::sync::Arc;

use super::{predict, LdcrfError, LdcrfModel};
use crate::features::FeatureFrame;

pub const DEFAULT_BUFFER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlinePrediction {
    pub label: u8,
    pub posterior: f64,
}

/// Holds the last `capacity` preprocessed frames. Each push re-runs
/// inference over the buffer and reports the newest position.
#[derive(Debug, Clone)]
pub struct OnlineSession {
    model: Arc<LdcrfModel>,
    capacity: usize,
    buffer: VecDeque<FeatureFrame>,
}

impl OnlineSession {
    pub fn new(model: Arc<LdcrfModel>) -> Self {
        Self::with_capacity(model, DEFAULT_BUFFER)
    }

    pub fn with_capacity(model: Arc<LdcrfModel>, capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self { model, capacity, buffer: VecDeque::with_capacity(capacity) }
    }

    pub fn model(&self) -> &LdcrfModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
    }

    pub fn buffer(&self) -> impl Iterator<Item = &FeatureFrame> {
        self.buffer.iter()
    }

    /// `frame` must already be imputed and normalized.
    pub fn push(&mut self, frame: FeatureFrame) -> Result<OnlinePrediction, LdcrfError> {
        self.model.check_width(std::slice::from_ref(&frame))?;
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(frame);
        let frames: Vec<FeatureFrame> = self.buffer.iter().cloned().collect();
        let out = predict(&self.model, &frames)?;
        let last = frames.len() - 1;
        Ok(OnlinePrediction { label: out.labels[last], posterior: out.posterior[last] })
    }
}
