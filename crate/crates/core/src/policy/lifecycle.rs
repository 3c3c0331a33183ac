use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIMEOUT_S: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InterruptionOutcome {
    Accepted { lag: f64, build_time: f64 },
    Ignored { timeout: f64 },
}

impl InterruptionOutcome {
    /// Total time the robot waited after requesting help.
    pub fn duration(&self) -> f64 {
        match *self {
            InterruptionOutcome::Accepted { lag, build_time } => lag + build_time,
            InterruptionOutcome::Ignored { timeout } => timeout,
        }
    }

    pub fn lag(&self) -> Option<f64> {
        match *self {
            InterruptionOutcome::Accepted { lag, .. } => Some(lag),
            InterruptionOutcome::Ignored { .. } => None,
        }
    }

    pub fn accepted(&self) -> bool {
        matches!(self, InterruptionOutcome::Accepted { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LifecycleError {
    #[error("acceptance {lag:.3} s after the request exceeds the {timeout} s limit")]
    LateAcceptance { lag: f64, timeout: f64 },
    #[error("acceptance precedes the request by {0:.3} s")]
    BeforeRequest(f64),
    #[error("negative or non-finite build time {0}")]
    BuildTime(f64),
}

/// Outcome of one request given when (if ever) the participant accepted.
pub fn interruption_outcome(
    request_t: f64,
    accept_t: Option<f64>,
    build_time: f64,
    timeout: f64,
) -> Result<InterruptionOutcome, LifecycleError> {
    let Some(accept_t) = accept_t else {
        return Ok(InterruptionOutcome::Ignored { timeout });
    };
    let lag = accept_t - request_t;
    if lag < 0.0 {
        return Err(LifecycleError::BeforeRequest(-lag));
    }
    if lag > timeout {
        return Err(LifecycleError::LateAcceptance { lag, timeout });
    }
    if !(build_time >= 0.0 && build_time.is_finite()) {
        return Err(LifecycleError::BuildTime(build_time));
    }
    Ok(InterruptionOutcome::Accepted { lag, build_time })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let a = interruption_outcome(100.0, Some(130.0), 60.0, 120.0).unwrap();
        assert_eq!((a.lag(), a.duration()), (Some(30.0), 90.0));
        let i = interruption_outcome(100.0, None, 0.0, 120.0).unwrap();
        assert_eq!(i.duration(), 120.0);
        assert_eq!(interruption_outcome(5.0, Some(5.0), 1.0, 120.0).unwrap().lag(), Some(0.0));
        assert!(matches!(
            interruption_outcome(0.0, Some(121.0), 1.0, 120.0),
            Err(LifecycleError::LateAcceptance { .. })
        ));
    }
}
