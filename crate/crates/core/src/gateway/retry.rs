use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// Exponential backoff: attempt `i` (1-based) is followed by a pause of
/// `base_delay_ms · multiplier^(i-1)`, capped at `max_delay_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_delay")]
    pub base_delay_ms: u64,
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    #[serde(default = "default_max_delay")]
    pub max_delay_ms: u64,
}

fn default_attempts() -> u32 {
    5
}

fn default_base_delay() -> u64 {
    1000
}

fn default_multiplier() -> f64 {
    2.0
}

fn default_max_delay() -> u64 {
    60_000
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: default_attempts(),
            base_delay_ms: default_base_delay(),
            multiplier: default_multiplier(),
            max_delay_ms: default_max_delay(),
        }
    }
}

impl RetryPolicy {
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(attempt.saturating_sub(1) as i32);
        let ms = (self.base_delay_ms as f64 * factor).min(self.max_delay_ms as f64);
        Duration::from_millis(ms as u64)
    }
}

/// Failure of a single attempt.
#[derive(Debug)]
pub enum AttemptError {
    /// Timeouts, connection drops, 429 and 5xx.
    Retryable(String),
    Fatal(GatewayError),
}

/// Calls `attempt` until it succeeds, fails fatally, or the attempt budget
/// is spent. Returns the value and the number of attempts used.
pub fn run_with_retry<T>(
    policy: &RetryPolicy,
    mut attempt: impl FnMut(u32) -> Result<T, AttemptError>,
) -> Result<(T, u32), GatewayError> {
    let max = policy.max_attempts.max(1);
    let mut last = String::new();
    for i in 1..=max {
        match attempt(i) {
            Ok(v) => return Ok((v, i)),
            Err(AttemptError::Fatal(e)) => return Err(e),
            Err(AttemptError::Retryable(msg)) => {
                log::warn!("attempt {i}/{max} failed: {msg}");
                last = msg;
                if i < max {
                    std::thread::sleep(policy.delay_after(i));
                }
            }
        }
    }
    Err(GatewayError::Transport {
        attempts: max,
        message: last,
    })
}
