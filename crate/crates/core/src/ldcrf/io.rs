//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{observation_dim, LdcrfError, LdcrfHyperparams, LdcrfModel};
use crate::features::{FeatureSchema, NormalizationConstants};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Stored {
    format_version: u32,
    hyperparams: LdcrfHyperparams,
    schema: FeatureSchema,
    normalization: NormalizationConstants,
    hidden_partition: [Vec<usize>; 2],
    state_weights: Vec<Vec<f64>>,
    transition_weights: Vec<Vec<f64>>,
}

fn rows(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width.max(1)).map(<[f64]>::to_vec).collect()
}

fn flatten(rows: Vec<Vec<f64>>, height: usize, width: usize, what: &str) -> Result<Vec<f64>, LdcrfError> {
    if rows.len() != height || rows.iter().any(|r| r.len() != width) {
        return Err(LdcrfError::Format(format!("{what} must be {height}×{width}")));
    }
    Ok(rows.into_iter().flatten().collect())
}

pub fn model_to_json(model: &LdcrfModel) -> String {
    let h = model.hidden_states();
    let stored = Stored {
        format_version: MODEL_FORMAT_VERSION,
        hyperparams: model.hyperparams,
        schema: model.schema.clone(),
        normalization: model.normalization.clone(),
        hidden_partition: model.hidden_partition(),
        state_weights: rows(&model.state_weights, model.observation_dim()),
        transition_weights: rows(&model.transition_weights, h),
    };
    serde_json::to_string_pretty(&stored).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<LdcrfModel, LdcrfError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| LdcrfError::Format(e.to_string()))?;
    match value.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
        Some(v) => return Err(LdcrfError::Version(v as u32)),
        None => return Err(LdcrfError::Format("missing format_version".into())),
    }
    let stored: Stored = serde_json::from_value(value).map_err(|e| LdcrfError::Format(e.to_string()))?;
    let hp = stored.hyperparams;
    if hp.hidden_per_label == 0 || !(hp.l2_sigma2 > 0.0) {
        return Err(LdcrfError::Format("hidden_per_label must be ≥ 1 and l2_sigma2 > 0".into()));
    }
    stored.normalization.check_schema(&stored.schema)?;
    let h = 2 * hp.hidden_per_label;
    let m = hp.hidden_per_label;
    if stored.hidden_partition != [(0..m).collect::<Vec<_>>(), (m..h).collect()] {
        return Err(LdcrfError::Format("hidden_partition must be contiguous blocks 0..m, m..2m".into()));
    }
    let d = observation_dim(stored.schema.len(), hp.window);
    let state_weights = flatten(stored.state_weights, h, d, "state_weights")?;
    let transition_weights = flatten(stored.transition_weights, h, h, "transition_weights")?;
    if let Some(w) = state_weights.iter().chain(&transition_weights).find(|w| !w.is_finite()) {
        return Err(LdcrfError::NonFinite(*w));
    }
    Ok(LdcrfModel { hyperparams: hp, schema: stored.schema, normalization: stored.normalization, state_weights, transition_weights })
}

pub fn save_model(model: &LdcrfModel, path: &Path) -> Result<(), LdcrfError> {
    std::fs::write(path, model_to_json(model))
        .map_err(|source| LdcrfError::Io { path: path.display().to_string(), source })
}

pub fn load_model(path: &Path) -> Result<LdcrfModel, LdcrfError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| LdcrfError::Io { path: path.display().to_string(), source })?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = LdcrfModel::random_init(FeatureSchema::standard(), LdcrfHyperparams::default(), 5);
        assert_eq!(model_from_json(&model_to_json(&m)).unwrap(), m);
    }

    #[test]
    fn rejects_version_and_shape() {
        let m = LdcrfModel::random_init(FeatureSchema::anonymous(2), LdcrfHyperparams::default(), 5);
        let mut v: serde_json::Value = serde_json::from_str(&model_to_json(&m)).unwrap();
        v["format_version"] = 99.into();
        assert!(matches!(model_from_json(&v.to_string()), Err(LdcrfError::Version(99))));
        v["format_version"] = 1.into();
        v["transition_weights"].as_array_mut().unwrap().pop();
        assert!(matches!(model_from_json(&v.to_string()), Err(LdcrfError::Format(_))));
    }
}
