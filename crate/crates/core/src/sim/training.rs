//! Synthetic labeled data and the classifier used by MDL trials.

use super::SimError;
use crate::features::{fuse_on_grid, FeatureSchema, FusionConfig};
use crate::ldcrf::{train, LabeledSequence, LdcrfHyperparams, TrainedModel};
use crate::scene::{
    generate_trial_scene, random_script, ActivityPhase, DetectionRecord, GroundTruthLabel, NoiseConfig, ScriptConfig,
};
use crate::{par, rng};

const TAG_SCRIPT: u64 = 0x41;
const TAG_SCENE: u64 = 0x42;

/// Script, detection log and 2 Hz labels of synthetic trial `k`.
pub fn synthetic_trial(
    k: usize,
    script: &ScriptConfig,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<(Vec<ActivityPhase>, Vec<DetectionRecord>, Vec<GroundTruthLabel>), SimError> {
    let phases = random_script(script, rng::derive_seed(seed, &[TAG_SCRIPT, k as u64]));
    let (log, labels) = generate_trial_scene(&phases, noise, rng::derive_seed(seed, &[TAG_SCENE, k as u64]))
        .map_err(|e| SimError::Config(e.to_string()))?;
    Ok((phases, log, labels))
}

/// `trials` scripted sessions, generated, fused and labeled on the 2 Hz
/// grid. Trial ids are `trial-000`, `trial-001`, ...
pub fn synthetic_dataset(
    trials: usize,
    script: &ScriptConfig,
    noise: &NoiseConfig,
    fusion: &FusionConfig,
    seed: u64,
) -> Result<Vec<LabeledSequence>, SimError> {
    par::map_range(trials, |k| {
        let (_, log, labels) = synthetic_trial(k, script, noise, seed)?;
        let ticks: Vec<f64> = labels.iter().map(|l| l.t).collect();
        let frames = fuse_on_grid(&log, fusion, &ticks);
        Ok(LabeledSequence::new(format!("trial-{k:03}"), frames, labels.iter().map(|l| l.interruptible).collect()))
    })
    .into_iter()
    .collect()
}

pub fn train_synthetic_model(
    trials: usize,
    script: &ScriptConfig,
    noise: &NoiseConfig,
    fusion: &FusionConfig,
    hyperparams: LdcrfHyperparams,
    seed: u64,
) -> Result<TrainedModel, SimError> {
    let data = synthetic_dataset(trials, script, noise, fusion, seed)?;
    Ok(train(&data, &FeatureSchema::standard(), hyperparams, seed)?)
}
