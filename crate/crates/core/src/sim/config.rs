//! Experiment configuration, read from TOML.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::features::FusionConfig;
use crate::policy::{LifecycleConfig, MdlConfig, PolicyKind, RndConfig};
use crate::scene::{NoiseConfig, ScriptConfig, LEISURE_WEIGHTS};

/// Normal distribution truncated by clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampedNormal {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl ClampedNormal {
    pub fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        let v = if self.sd > 0.0 { Normal::new(self.mean, self.sd).expect("sd > 0").sample(r) } else { self.mean };
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalLag {
    pub median: f64,
    pub sigma: f64,
}

impl LogNormalLag {
    pub fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        if self.sigma > 0.0 {
            LogNormal::new(self.median.ln(), self.sigma).expect("sigma > 0").sample(r)
        } else {
            self.median
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BuildExperience {
    Low,
    High,
}

/// Synthetic participant behaviour. None of these distributions are
/// measured; they are calibration knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticipantModel {
    /// Work needed for one main build at HIGH experience.
    pub build_work_s: ClampedNormal,
    /// LOW experience multiplies build work by this.
    pub low_experience_slowdown: f64,
    pub high_experience_prob: f64,
    pub idle_response_lag: LogNormalLag,
    /// Time to reach a natural stopping point when asked mid-build.
    pub busy_response_lag: LogNormalLag,
    /// Ignore probability when busy: `min(1, base + per_pending · pending)`.
    pub ignore_base: f64,
    pub ignore_per_pending: f64,
    pub robot_build_s: ClampedNormal,
    /// Couch, phone, drink and read weights for leisure segments.
    pub leisure_weights: [f64; 4],
    pub leisure_segment_s: (f64, f64),
    /// Chance that a leisure segment is an out-of-view trip instead.
    pub absent_prob: f64,
    pub absent_s: (f64, f64),
}

impl Default for ParticipantModel {
    fn default() -> Self {
        Self {
            build_work_s: ClampedNormal { mean: 270.0, sd: 60.0, min: 120.0, max: 480.0 },
            low_experience_slowdown: 1.25,
            high_experience_prob: 0.5,
            idle_response_lag: LogNormalLag { median: 10.0, sigma: 0.5 },
            busy_response_lag: LogNormalLag { median: 45.0, sigma: 0.6 },
            ignore_base: 0.2,
            ignore_per_pending: 0.1,
            robot_build_s: ClampedNormal { mean: 55.0, sd: 10.0, min: 30.0, max: 100.0 },
            leisure_weights: LEISURE_WEIGHTS,
            leisure_segment_s: (20.0, 60.0),
            absent_prob: 0.0,
            absent_s: (5.0, 15.0),
        }
    }
}

impl ParticipantModel {
    pub fn ignore_probability(&self, busy: bool, pending: u32) -> f64 {
        if busy {
            (self.ignore_base + self.ignore_per_pending * f64::from(pending)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let probs = [self.high_experience_prob, self.ignore_base, self.absent_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || self.ignore_per_pending < 0.0 {
            return Err(SimError::Config("participant probabilities must lie in [0, 1]".into()));
        }
        if self.leisure_segment_s.0 <= 0.0 || self.leisure_segment_s.1 < self.leisure_segment_s.0 {
            return Err(SimError::Config("participant.leisure_segment_s must be a positive range".into()));
        }
        if self.absent_s.0 <= 0.0 || self.absent_s.1 < self.absent_s.0 {
            return Err(SimError::Config("participant.absent_s must be a positive range".into()));
        }
        if self.idle_response_lag.median <= 0.0 || self.busy_response_lag.median <= 0.0 {
            return Err(SimError::Config("response lag medians must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub training_s: f64,
    pub long_session_s: f64,
    pub short_session_s: f64,
    pub break_s: f64,
    /// Pause between the two builds of a session.
    pub inter_build_break_s: f64,
    pub training_builds: u32,
    pub session_builds: u32,
    /// Long session first. Unset alternates by trial index.
    pub long_first: Option<bool>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            training_s: 540.0,
            long_session_s: 900.0,
            short_session_s: 540.0,
            break_s: 360.0,
            inter_build_break_s: 60.0,
            training_builds: 1,
            session_builds: 2,
            long_first: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    pub door_to_observe_s: f64,
    pub observe_to_table_s: f64,
    /// Table to door, build verification, and back through the door.
    pub return_s: f64,
    /// Leading entries excluded from metrics.
    pub warmup_entries: usize,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self { door_to_observe_s: 10.0, observe_to_table_s: 8.0, return_s: 90.0, warmup_entries: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WizardKind {
    Perfect,
    Conservative,
    Aggressive,
}

/// Simulated wizard. All presets see ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WizardPreset {
    pub kind: WizardKind,
    pub reaction_delay_s: f64,
    /// Sustained idleness required before signalling (CONSERVATIVE).
    pub dwell_s: f64,
    /// Per-build chance of an anticipatory signal (AGGRESSIVE).
    pub anticipate_prob: f64,
    /// Anticipatory signals fall in this final fraction of a build.
    pub anticipate_fraction: f64,
}

impl Default for WizardPreset {
    fn default() -> Self {
        wizard_preset(WizardKind::Perfect)
    }
}

pub fn wizard_preset(kind: WizardKind) -> WizardPreset {
    let base = WizardPreset {
        kind,
        reaction_delay_s: 2.0,
        dwell_s: 0.0,
        anticipate_prob: 0.0,
        anticipate_fraction: 0.1,
    };
    match kind {
        WizardKind::Perfect => base,
        WizardKind::Conservative => WizardPreset { dwell_s: 5.0, ..base },
        WizardKind::Aggressive => WizardPreset { anticipate_prob: 0.5, ..base },
    }
}

/// Classifier training run used when MDL needs a model and none is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelTrainingConfig {
    pub trials: usize,
    pub script: ScriptConfig,
}

impl Default for ModelTrainingConfig {
    fn default() -> Self {
        Self { trials: 10, script: ScriptConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    /// Scene seconds per wall second.
    pub time_scale: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:7878".into(), time_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub policy: PolicyKind,
    pub schedule: ScheduleConfig,
    pub participant: ParticipantModel,
    pub noise: NoiseConfig,
    pub fusion: FusionConfig,
    pub robot: RobotConfig,
    pub wizard: WizardPreset,
    pub mdl: MdlConfig,
    pub rnd: RndConfig,
    pub lifecycle: LifecycleConfig,
    pub training: ModelTrainingConfig,
    pub serve: ServeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Rnd,
            schedule: ScheduleConfig::default(),
            participant: ParticipantModel::default(),
            noise: NoiseConfig::moderate(),
            fusion: FusionConfig::default(),
            robot: RobotConfig::default(),
            wizard: WizardPreset::default(),
            mdl: MdlConfig::default(),
            rnd: RndConfig::default(),
            lifecycle: LifecycleConfig::default(),
            training: ModelTrainingConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.participant.validate()?;
        self.noise.validate().map_err(|e| SimError::Config(e.to_string()))?;
        let s = &self.schedule;
        if [s.training_s, s.long_session_s, s.short_session_s].iter().any(|v| *v <= 0.0) || s.break_s < 0.0 {
            return Err(SimError::Config("schedule lengths must be positive".into()));
        }
        if s.session_builds == 0 || s.training_builds == 0 {
            return Err(SimError::Config("sessions need at least one build".into()));
        }
        let r = &self.robot;
        if [r.door_to_observe_s, r.observe_to_table_s, r.return_s].iter().any(|v| *v < 0.0) || r.return_s <= 0.0 {
            return Err(SimError::Config("robot transit times must be non-negative and return_s positive".into()));
        }
        if !(self.lifecycle.timeout_s > 0.0) || self.lifecycle.approach_overhead_s < 0.0 {
            return Err(SimError::Config("lifecycle.timeout_s must be positive".into()));
        }
        if !(0.0..=30.0 * 60.0).contains(&self.rnd.max_base_wait) {
            return Err(SimError::Config("rnd.max_base_wait must be non-negative".into()));
        }
        if self.serve.time_scale <= 0.0 {
            return Err(SimError::Config("serve.time_scale must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let partial = ExperimentConfig::from_toml_str(
            "policy = \"mdl\"\n[mdl]\nrequired_ticks = 7\n[lifecycle]\ntimeout_s = 90\n[rnd]\nmax_base_wait = 20\n",
        )
        .unwrap();
        assert_eq!(partial.policy, PolicyKind::Mdl);
        assert_eq!(partial.mdl.required_ticks, 7);
        assert_eq!(partial.lifecycle.timeout_s, 90.0);
        assert_eq!(partial.rnd.max_base_wait, 20.0);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn ignore_probability_is_monotone() {
        let p = ParticipantModel::default();
        assert_eq!(p.ignore_probability(false, 9), 0.0);
        let v: Vec<f64> = (0..12).map(|k| p.ignore_probability(true, k)).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(v[11], 1.0);
    }
}
