//! Discrete-event simulation of the study protocol.
//!
//! One trial is a training session, a break, two build sessions of
//! different lengths around a second break. A single robot cycles through
//! entries: it drives to the observation point, waits as its policy
//! decides, approaches, requests help and waits for the outcome, then
//! returns for verification and comes straight back.

mod config;
mod engine;
mod log;
mod participant;
mod schedule;
mod snapshot;
mod training;

pub use config::{
    wizard_preset, BuildExperience, ClampedNormal, ExperimentConfig, LogNormalLag, ModelTrainingConfig,
    ParticipantModel, RobotConfig, ScheduleConfig, ServeConfig, WizardKind, WizardPreset,
};
pub use engine::{TrialSetup, TrialSim, WizardSource};
pub use log::{EntryRecord, EventKind, MainBuildRecord, TrialEvent, TrialLog, TRIAL_LOG_VERSION};
pub use participant::{Segment, SegmentActivity};
pub use schedule::{BlockKind, BuildSlot, ScheduleBlock, TrialSchedule};
pub use snapshot::{ObjectView, PoseSummary, RobotState, RobotView, SceneSnapshot};
pub use training::{synthetic_dataset, synthetic_trial, train_synthetic_model};

use std::sync::Arc;

use thiserror::Error;

use crate::ldcrf::{LdcrfError, LdcrfHyperparams, LdcrfModel};
use crate::policy::{LifecycleError, PolicyKind};
use crate::{par, rng};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trial log: {0}")]
    Format(String),
    #[error("unsupported trial log version {0}")]
    Version(u32),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] LdcrfError),
    #[error(transparent)]
    Lifecycle(#[from] LifecycleError),
}

/// Runs one trial to completion.
pub fn run_trial(setup: TrialSetup) -> Result<TrialLog, SimError> {
    TrialSim::new(setup)?.finish()
}

/// Seed of trial `i` of `condition` in an experiment seeded with `seed`.
pub fn trial_seed(seed: u64, condition: PolicyKind, i: usize) -> u64 {
    let c = PolicyKind::ALL.iter().position(|k| *k == condition).expect("known condition") as u64;
    rng::derive_seed(seed, &[0xE7, c, i as u64])
}

/// Trains the MDL classifier described by `config.training`.
pub fn train_mdl_model(config: &ExperimentConfig, seed: u64) -> Result<LdcrfModel, SimError> {
    let t = &config.training;
    let trained = train_synthetic_model(
        t.trials,
        &t.script,
        &config.noise,
        &config.fusion,
        LdcrfHyperparams::default(),
        rng::derive_seed(seed, &[0xAD]),
    )?;
    Ok(trained.model)
}

/// `n` trials of each listed condition. Session order alternates with the
/// trial index unless the config pins it.
pub fn run_experiment(
    config: &ExperimentConfig,
    conditions: &[PolicyKind],
    n: usize,
    model: Option<Arc<LdcrfModel>>,
    seed: u64,
) -> Result<Vec<TrialLog>, SimError> {
    config.validate()?;
    let model = match (conditions.contains(&PolicyKind::Mdl), model) {
        (true, None) => Some(Arc::new(train_mdl_model(config, seed)?)),
        (true, m) => m,
        (false, _) => None,
    };
    let jobs: Vec<(PolicyKind, usize)> = conditions.iter().flat_map(|&c| (0..n).map(move |i| (c, i))).collect();
    par::map(&jobs, |&(condition, i)| {
        run_trial(TrialSetup {
            trial_id: format!("{}-{i:03}", condition.name()),
            condition,
            config: config.clone(),
            model: (condition == PolicyKind::Mdl).then(|| model.clone()).flatten(),
            wizard: (condition == PolicyKind::Woz).then_some(WizardSource::Preset(config.wizard)),
            long_first: config.schedule.long_first.unwrap_or(i % 2 == 0),
            seed: trial_seed(seed, condition, i),
        })
    })
    .into_iter()
    .collect()
}
