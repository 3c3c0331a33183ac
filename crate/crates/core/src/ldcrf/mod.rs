//! Latent-dynamic conditional random field for binary per-frame
//! interruptibility.
//!
//! Each label owns a disjoint block of hidden states: label 0 owns states
//! `0..m` and label 1 owns `m..2m`. The score of a hidden path `h` is
//!
//! ```text
//! S(h, x) = Σ_i state[h_i] · φ(x, i) + Σ_{i>0} trans[h_{i-1}, h_i]
//! ```
//!
//! where `φ(x, i)` concatenates, for lags `0..=ω`, the values (NaN as 0) and
//! validity bits of frame `max(i - lag, 0)`. The window only looks back, so
//! live classification needs no future frames. The label probability sums
//! `exp S` over the paths that stay inside each position's label block.

mod cv;
mod inference;
mod io;
mod lbfgs;
mod online;
mod train;

pub use cv::{cross_validate, fold_assignment, CrossValidation, FoldReport};
pub use inference::{
    encode, forward_backward, gradient, label_sequence_probability, log_likelihood, predict, Encoded,
    Marginals, ModelGradient, Prediction,
};
pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use lbfgs::{minimize, LbfgsOptions, LbfgsOutcome, LbfgsStop};
pub use online::{OnlinePrediction, OnlineSession, DEFAULT_BUFFER};
pub use train::{dataset_objective, train, train_preprocessed, TrainDiagnostics, TrainedModel};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{impute, normalize, FeatureFrame, FeatureSchema, NormalizationConstants, NormalizeError};
use crate::rng;

#[derive(Debug, Error)]
pub enum LdcrfError {
    #[error("sequence `{trial_id}` has {frames} frames but {labels} labels")]
    LengthMismatch { trial_id: String, frames: usize, labels: usize },
    #[error("frame width {got} does not match the model's {expected} features")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("objective became non-finite ({0}); check feature scaling")]
    NonFinite(f64),
    #[error("fewer trials than folds ({trials} < {folds})")]
    TooFewTrials { trials: usize, folds: usize },
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error("model file: {0}")]
    Format(String),
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdcrfHyperparams {
    pub hidden_per_label: usize,
    pub window: usize,
    pub l2_sigma2: f64,
    pub max_iterations: usize,
    /// Stop once the objective gradient's max-norm falls below this.
    pub convergence_tol: f64,
    /// Max age of a value used to fill a missing field.
    pub imputation_horizon: f64,
}

impl Default for LdcrfHyperparams {
    fn default() -> Self {
        Self {
            hidden_per_label: 4,
            window: 3,
            l2_sigma2: 1.0,
            max_iterations: 200,
            convergence_tol: 1e-3,
            imputation_horizon: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub trial_id: String,
    pub frames: Vec<FeatureFrame>,
    pub labels: Vec<u8>,
}

impl LabeledSequence {
    pub fn new(trial_id: impl Into<String>, frames: Vec<FeatureFrame>, labels: Vec<u8>) -> Self {
        Self { trial_id: trial_id.into(), frames, labels }
    }

    pub fn validate(&self, width: usize) -> Result<(), LdcrfError> {
        if self.frames.len() != self.labels.len() {
            return Err(LdcrfError::LengthMismatch {
                trial_id: self.trial_id.clone(),
                frames: self.frames.len(),
                labels: self.labels.len(),
            });
        }
        if self.frames.is_empty() {
            return Err(LdcrfError::EmptySequence);
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y > 1) {
            return Err(LdcrfError::InvalidLabel(bad));
        }
        if let Some(f) = self.frames.iter().find(|f| f.values.len() != width) {
            return Err(LdcrfError::SchemaMismatch { expected: width, got: f.values.len() });
        }
        Ok(())
    }
}

/// Trained or initial model. Immutable once built; share it freely.
#[derive(Debug, Clone, PartialEq)]
pub struct LdcrfModel {
    pub hyperparams: LdcrfHyperparams,
    pub schema: FeatureSchema,
    pub normalization: NormalizationConstants,
    /// `hidden_states × observation_dim`, row-major.
    pub state_weights: Vec<f64>,
    /// `hidden_states × hidden_states`, row-major, indexed `[from, to]`.
    pub transition_weights: Vec<f64>,
}

impl LdcrfModel {
    pub fn zeros(schema: FeatureSchema, hyperparams: LdcrfHyperparams) -> Self {
        let h = 2 * hyperparams.hidden_per_label;
        let d = observation_dim(schema.len(), hyperparams.window);
        Self {
            normalization: NormalizationConstants::identity(schema.clone()),
            schema,
            hyperparams,
            state_weights: vec![0.0; h * d],
            transition_weights: vec![0.0; h * h],
        }
    }

    /// Weights uniform in `[-0.01, 0.01]` from `seed`.
    pub fn random_init(schema: FeatureSchema, hyperparams: LdcrfHyperparams, seed: u64) -> Self {
        let mut model = Self::zeros(schema, hyperparams);
        let mut r = rng::stream(seed, &[0x1D]);
        for w in model.state_weights.iter_mut().chain(model.transition_weights.iter_mut()) {
            *w = r.random_range(-0.01..=0.01);
        }
        model
    }

    pub fn hidden_states(&self) -> usize {
        2 * self.hyperparams.hidden_per_label
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(self.schema.len(), self.hyperparams.window)
    }

    /// Label owning hidden state `h`.
    pub fn label_of(&self, h: usize) -> u8 {
        (h / self.hyperparams.hidden_per_label) as u8
    }

    /// Hidden states owned by each label.
    pub fn hidden_partition(&self) -> [Vec<usize>; 2] {
        let m = self.hyperparams.hidden_per_label;
        [(0..m).collect(), (m..2 * m).collect()]
    }

    pub fn parameter_count(&self) -> usize {
        self.state_weights.len() + self.transition_weights.len()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.state_weights.iter().chain(&self.transition_weights).copied().collect()
    }

    pub fn set_parameters(&mut self, theta: &[f64]) {
        let n = self.state_weights.len();
        self.state_weights.copy_from_slice(&theta[..n]);
        self.transition_weights.copy_from_slice(&theta[n..]);
    }

    pub fn with_parameters(&self, theta: &[f64]) -> Self {
        let mut m = self.clone();
        m.set_parameters(theta);
        m
    }

    /// Imputation and normalization of fused frames, as done in training.
    pub fn preprocess(&self, frames: &[FeatureFrame]) -> Result<Vec<FeatureFrame>, LdcrfError> {
        let imputed = impute(frames, self.hyperparams.imputation_horizon);
        Ok(normalize(&imputed, &self.schema, &self.normalization)?)
    }

    pub(crate) fn check_width(&self, frames: &[FeatureFrame]) -> Result<(), LdcrfError> {
        match frames.iter().find(|f| f.values.len() != self.schema.len()) {
            Some(f) => Err(LdcrfError::SchemaMismatch { expected: self.schema.len(), got: f.values.len() }),
            None => Ok(()),
        }
    }

    pub(crate) fn regularizer(&self) -> f64 {
        let sq: f64 = self.state_weights.iter().chain(&self.transition_weights).map(|w| w * w).sum();
        sq / (2.0 * self.hyperparams.l2_sigma2)
    }
}

pub fn observation_dim(features: usize, window: usize) -> usize {
    (window + 1) * 2 * features
}
