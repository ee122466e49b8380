//! Model access: a raw text-completion client, a scripted mock, and the
//! post-processing that splits a continuation into reasoning and answer.
//!
//! The wire protocol is prompt-in, continuation-out. Chat-role APIs cannot
//! express a partially written assistant turn, and every prompt strategy
//! here ends inside the reasoning phase.

mod http;
mod mock;
mod retry;

use std::fmt;
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;
use thiserror::Error;

pub use http::{CompletionClient, EndpointConfig};
pub use mock::{MockBackend, ScriptEntry};
pub use retry::{run_with_retry, AttemptError, RetryPolicy};

use crate::prompt::RenderedPrompt;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("mock backend has no script for prompt {0}")]
    Unscripted(String),
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSettings {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_temperature() -> f64 {
    0.6
}

fn default_top_p() -> f64 {
    0.95
}

fn default_max_new_tokens() -> u32 {
    4096
}

fn default_timeout() -> f64 {
    600.0
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_new_tokens: default_max_new_tokens(),
            stop_sequences: Vec::new(),
            request_timeout_secs: default_timeout(),
            seed: None,
        }
    }
}

impl GenerationSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GatewayError::Config(m));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be > 0".into());
        }
        if !(self.request_timeout_secs > 0.0 && self.request_timeout_secs.is_finite()) {
            return bad("request_timeout_secs must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

impl fmt::Display for FinishReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinishReason::Stop => "stop",
            FinishReason::Length => "length",
            FinishReason::Error => "error",
        })
    }
}

/// Raw backend result before splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    pub attempts: u32,
}

/// A model continuation split at the reasoning close marker.
///
/// `full_text` excludes the prompt prefill; `char_len` counts its Unicode
/// scalar values, so injected passages never count toward output length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub full_text: String,
    pub reasoning_text: String,
    pub answer_text: String,
    pub reasoning_terminated: bool,
    pub char_len: usize,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
}

impl GenerationOutcome {
    pub fn from_text(full_text: String, reasoning_close: &str, finish_reason: FinishReason, latency_ms: u64) -> Self {
        let split = split_reasoning(&full_text, reasoning_close);
        Self {
            reasoning_text: split.reasoning.to_string(),
            answer_text: split.answer.to_string(),
            reasoning_terminated: split.terminated,
            char_len: full_text.chars().count(),
            full_text,
            finish_reason,
            latency_ms,
        }
    }

    /// Outcome recorded for a cell that produced no generation.
    pub fn failed(latency_ms: u64) -> Self {
        Self::from_text(String::new(), "</think>", FinishReason::Error, latency_ms)
    }

    /// Answer text with surrounding whitespace removed.
    pub fn answer_trimmed(&self) -> &str {
        self.answer_text.trim()
    }
}

impl crate::metrics::HasCharLen for GenerationOutcome {
    fn char_len(&self) -> usize {
        self.char_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReasoningSplit<'a> {
    pub reasoning: &'a str,
    pub answer: &'a str,
    pub terminated: bool,
}

/// Splits at the first `reasoning_close`. Segments are raw, so
/// `reasoning + close + answer == full_text` when terminated.
pub fn split_reasoning<'a>(full_text: &'a str, reasoning_close: &str) -> ReasoningSplit<'a> {
    match full_text.find(reasoning_close) {
        Some(i) if !reasoning_close.is_empty() => ReasoningSplit {
            reasoning: &full_text[..i],
            answer: &full_text[i + reasoning_close.len()..],
            terminated: true,
        },
        _ => ReasoningSplit {
            reasoning: full_text,
            answer: "",
            terminated: false,
        },
    }
}

static ANSWER_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)answer\s*:").expect("valid regex"));

/// Text after the last `Answer:` marker, or the whole trimmed answer.
pub fn extract_answer(answer_text: &str) -> String {
    let Some(m) = ANSWER_MARKER.find_iter(answer_text).last() else {
        return answer_text.trim().to_string();
    };
    let rest = &answer_text[m.end()..];
    let clean = |s: &str| s.trim().trim_matches('*').trim().to_string();
    let first_line = rest.lines().next().map(clean).unwrap_or_default();
    if !first_line.is_empty() {
        return first_line;
    }
    rest.lines().map(clean).find(|l| !l.is_empty()).unwrap_or_default()
}

/// Anything that can continue a rendered prompt.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &RenderedPrompt, settings: &GenerationSettings) -> Result<Completion>;

    fn describe(&self) -> String;
}

/// Runs one completion and splits the result.
pub fn generate(
    backend: &dyn CompletionBackend,
    prompt: &RenderedPrompt,
    settings: &GenerationSettings,
    reasoning_close: &str,
) -> Result<(GenerationOutcome, u32)> {
    let started = Instant::now();
    let completion = backend.complete(prompt, settings)?;
    let latency = started.elapsed().as_millis() as u64;
    Ok((
        GenerationOutcome::from_text(completion.text, reasoning_close, completion.finish_reason, latency),
        completion.attempts,
    ))
}
