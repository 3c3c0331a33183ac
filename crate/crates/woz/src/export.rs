//! Annotation exports on the replay tick grid and inter-rater agreement.

use std::path::Path;

use interrupt_engine::analysis::cronbach_alpha;
use interrupt_engine::scene::{read_labels_csv, write_labels_csv, GroundTruthLabel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{DecisionKind, DecisionRecord};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("annotator `{0}` has no label events")]
    EmptyLog(String),
    #[error("exports cover different trials: `{0}` and `{1}`")]
    TrialMismatch(String, String),
    #[error("exports have different tick grids")]
    GridMismatch,
    #[error("agreement needs at least two exports, got {0}")]
    TooFewExports(usize),
    #[error("agreement undefined: {0}")]
    Agreement(String),
    #[error(transparent)]
    Io(#[from] interrupt_engine::scene::LogError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationExport {
    pub trial_id: String,
    pub annotator_id: String,
    pub ticks: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Holds each annotator's last toggled state across the grid. Ticks before
/// the first label are 0.
pub fn export_annotations(
    trial_id: &str,
    decisions: &[DecisionRecord],
    annotator_id: &str,
    ticks: &[f64],
) -> Result<AnnotationExport, ExportError> {
    let toggles: Vec<(f64, u8)> = decisions
        .iter()
        .filter(|d| d.annotator_id == annotator_id)
        .filter_map(|d| match d.kind {
            DecisionKind::Label(v) => Some((d.t_scene, v)),
            DecisionKind::Interrupt => None,
        })
        .collect();
    if toggles.is_empty() {
        return Err(ExportError::EmptyLog(annotator_id.to_string()));
    }
    let mut state = 0;
    let mut next = 0;
    let labels = ticks
        .iter()
        .map(|&t| {
            while next < toggles.len() && toggles[next].0 <= t {
                state = toggles[next].1;
                next += 1;
            }
            state
        })
        .collect();
    Ok(AnnotationExport {
        trial_id: trial_id.to_string(),
        annotator_id: annotator_id.to_string(),
        ticks: ticks.to_vec(),
        labels,
    })
}

impl AnnotationExport {
    pub fn to_labels(&self) -> Vec<GroundTruthLabel> {
        self.ticks.iter().zip(&self.labels).map(|(&t, &interruptible)| GroundTruthLabel { t, interruptible }).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,interruptible\n");
        for (t, y) in self.ticks.iter().zip(&self.labels) {
            s.push_str(&format!("{t},{y}\n"));
        }
        s
    }

    /// Writes the `t,interruptible` file read by the training pipeline.
    pub fn write_csv(&self, path: &Path) -> Result<(), ExportError> {
        Ok(write_labels_csv(&self.to_labels(), path)?)
    }

    pub fn read_csv(path: &Path, trial_id: &str, annotator_id: &str) -> Result<Self, ExportError> {
        let labels = read_labels_csv(path)?;
        Ok(Self {
            trial_id: trial_id.to_string(),
            annotator_id: annotator_id.to_string(),
            ticks: labels.iter().map(|l| l.t).collect(),
            labels: labels.iter().map(|l| l.interruptible).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub trial_id: String,
    pub annotators: Vec<String>,
    pub alpha: f64,
    /// Ticks where not every annotator gave the same label.
    pub disagreements: Vec<f64>,
}

pub fn agreement_report(exports: &[AnnotationExport]) -> Result<AgreementReport, ExportError> {
    let [first, rest @ ..] = exports else {
        return Err(ExportError::TooFewExports(0));
    };
    if rest.is_empty() {
        return Err(ExportError::TooFewExports(1));
    }
    for e in rest {
        if e.trial_id != first.trial_id {
            return Err(ExportError::TrialMismatch(first.trial_id.clone(), e.trial_id.clone()));
        }
        if e.ticks != first.ticks {
            return Err(ExportError::GridMismatch);
        }
    }
    let matrix: Vec<Vec<f64>> =
        (0..first.ticks.len()).map(|i| exports.iter().map(|e| f64::from(e.labels[i])).collect()).collect();
    let alpha = cronbach_alpha(&matrix).map_err(|e| ExportError::Agreement(e.to_string()))?;
    let disagreements = first
        .ticks
        .iter()
        .enumerate()
        .filter(|(i, _)| exports.iter().any(|e| e.labels[*i] != first.labels[*i]))
        .map(|(_, &t)| t)
        .collect();
    Ok(AgreementReport {
        trial_id: first.trial_id.clone(),
        annotators: exports.iter().map(|e| e.annotator_id.clone()).collect(),
        alpha,
        disagreements,
    })
}
