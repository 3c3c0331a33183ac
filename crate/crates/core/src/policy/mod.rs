//! Interruption-decision automata and the per-entry interruption lifecycle.
//!
//! Every automaton is driven from the robot's observation point. RND runs
//! on exact flip times; MDL and WOZ run on the 2 Hz classifier tick.

mod lifecycle;

pub use lifecycle::{interruption_outcome, InterruptionOutcome, LifecycleError, DEFAULT_TIMEOUT_S};

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Rnd,
    Mdl,
    Woz,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Rnd, PolicyKind::Mdl, PolicyKind::Woz];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Rnd => "rnd",
            PolicyKind::Mdl => "mdl",
            PolicyKind::Woz => "woz",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rnd" => Ok(PolicyKind::Rnd),
            "mdl" => Ok(PolicyKind::Mdl),
            "woz" => Ok(PolicyKind::Woz),
            other => Err(format!("unknown policy `{other}` (expected rnd, mdl or woz)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Wait,
    Approach,
}

/// Seconds between RND coin flips and between classifier ticks.
pub const TICK: f64 = crate::TICK_SECONDS;

/// Uniform base wait, then a fair coin every tick. The first flip happens
/// one tick after the base wait has elapsed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RndState {
    pub base_wait: f64,
    pub elapsed: f64,
    flips: u32,
    decided: bool,
}

impl RndState {
    pub fn new<R: Rng + ?Sized>(max_base_wait: f64, rng: &mut R) -> Self {
        Self::with_base_wait(rng.random::<f64>() * max_base_wait)
    }

    pub fn with_base_wait(base_wait: f64) -> Self {
        Self { base_wait, elapsed: 0.0, flips: 0, decided: false }
    }

    /// Entry-relative time of the next flip, if still waiting.
    pub fn next_flip(&self) -> Option<f64> {
        (!self.decided).then(|| self.base_wait + TICK * f64::from(self.flips + 1))
    }

    /// Performs the next flip. `allowed = false` (nobody to approach) turns
    /// heads into another wait.
    pub fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R, allowed: bool) -> Decision {
        let Some(at) = self.next_flip() else { return Decision::Wait };
        self.elapsed = self.elapsed.max(at);
        self.flips += 1;
        if rng.random_bool(0.5) && allowed {
            self.decided = true;
            Decision::Approach
        } else {
            Decision::Wait
        }
    }

    /// Advances by `dt`, flipping for every flip time reached.
    pub fn tick<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> Decision {
        let target = self.elapsed + dt;
        while let Some(at) = self.next_flip() {
            if at > target + 1e-12 {
                break;
            }
            if self.flip(rng, true) == Decision::Approach {
                self.elapsed = target;
                return Decision::Approach;
            }
        }
        self.elapsed = target;
        Decision::Wait
    }

    /// Total wait of one entry: base wait plus the flip that came up heads.
    pub fn sample_wait<R: Rng + ?Sized>(max_base_wait: f64, rng: &mut R) -> (f64, f64) {
        let mut s = Self::new(max_base_wait, rng);
        loop {
            let at = s.next_flip().expect("undecided");
            if s.flip(rng, true) == Decision::Approach {
                return (s.base_wait, at);
            }
        }
    }
}

/// Approaches once `required` consecutive ticks classify as interruptible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdlState {
    pub consecutive_positive: u32,
    pub required: u32,
    decided: bool,
}

pub const DEFAULT_REQUIRED_TICKS: u32 = 5;

impl Default for MdlState {
    fn default() -> Self {
        Self::new(DEFAULT_REQUIRED_TICKS)
    }
}

impl MdlState {
    pub fn new(required: u32) -> Self {
        Self { consecutive_positive: 0, required: required.max(1), decided: false }
    }

    pub fn reset(&mut self) {
        self.consecutive_positive = 0;
        self.decided = false;
    }

    pub fn tick(&mut self, label: u8) -> Decision {
        if self.decided {
            return Decision::Wait;
        }
        if label == 1 {
            self.consecutive_positive += 1;
        } else {
            self.consecutive_positive = 0;
        }
        if self.consecutive_positive >= self.required {
            self.decided = true;
            Decision::Approach
        } else {
            Decision::Wait
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalAck {
    Latched,
    /// A signal was already honored (or pending) this entry.
    Redundant,
}

/// Latches the first wizard signal of an entry and approaches on the next
/// tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WozState {
    pub pending_signal: bool,
    pub latched: bool,
}

impl WozState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn signal(&mut self) -> SignalAck {
        if self.latched || self.pending_signal {
            SignalAck::Redundant
        } else {
            self.pending_signal = true;
            SignalAck::Latched
        }
    }

    pub fn tick(&mut self) -> Decision {
        if self.pending_signal && !self.latched {
            self.pending_signal = false;
            self.latched = true;
            Decision::Approach
        } else {
            Decision::Wait
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdlConfig {
    pub required_ticks: u32,
}

impl Default for MdlConfig {
    fn default() -> Self {
        Self { required_ticks: DEFAULT_REQUIRED_TICKS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RndConfig {
    pub max_base_wait: f64,
}

impl Default for RndConfig {
    fn default() -> Self {
        Self { max_base_wait: 30.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifecycleConfig {
    pub timeout_s: f64,
    /// Fixed delay added between a decision and the start of the approach.
    pub approach_overhead_s: f64,
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        Self { timeout_s: DEFAULT_TIMEOUT_S, approach_overhead_s: 0.0 }
    }
}
