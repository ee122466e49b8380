//! Client for OpenAI-compatible `/completions` endpoints (vLLM, SGLang,
//! llama.cpp server and friends).

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::retry::{run_with_retry, AttemptError, RetryPolicy};
use super::{Completion, CompletionBackend, FinishReason, GatewayError, GenerationSettings, Result};
use crate::prompt::RenderedPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL including the API prefix, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Mirror every request/response pair as JSON into this directory.
    #[serde(default)]
    pub log_dir: Option<PathBuf>,
}

pub struct CompletionClient {
    config: EndpointConfig,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

impl CompletionClient {
    pub fn new(config: EndpointConfig) -> Result<Self> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        if let Some(dir) = &config.log_dir {
            fs::create_dir_all(dir)?;
        }
        Ok(Self { config, api_key })
    }

    fn url(&self) -> String {
        format!("{}/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn mirror(&self, prompt: &RenderedPrompt, attempt: u32, request: &serde_json::Value, response: &str) {
        let Some(dir) = &self.config.log_dir else { return };
        let path = dir.join(format!("{}.{attempt}.json", &prompt.hash[..16]));
        let entry = json!({ "request": request, "response": response });
        if let Err(e) = fs::write(&path, entry.to_string()) {
            log::warn!("cannot mirror request to {}: {e}", path.display());
        }
    }

    fn attempt(
        &self,
        agent: &ureq::Agent,
        prompt: &RenderedPrompt,
        body: &serde_json::Value,
        attempt: u32,
    ) -> std::result::Result<Completion, AttemptError> {
        let mut req = agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                self.mirror(prompt, attempt, body, &format!("error: {e}"));
                return Err(classify(e));
            }
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(classify)?;
        self.mirror(prompt, attempt, body, &text);
        log::debug!("POST {} -> {status} ({} bytes)", self.url(), text.len());

        if status == 429 || (500..600).contains(&status) {
            return Err(AttemptError::Retryable(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(AttemptError::Fatal(GatewayError::Status { status, body: text }));
        }
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(GatewayError::BadResponse(e.to_string())))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| AttemptError::Fatal(GatewayError::BadResponse("no choices".into())))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            _ => FinishReason::Stop,
        };
        Ok(Completion {
            text: choice.text,
            finish_reason,
            attempts: attempt,
        })
    }
}

fn classify(e: ureq::Error) -> AttemptError {
    use ureq::Error as E;
    match e {
        E::Timeout(_) | E::Io(_) | E::ConnectionFailed | E::BodyStalled => AttemptError::Retryable(e.to_string()),
        other => AttemptError::Fatal(GatewayError::BadResponse(other.to_string())),
    }
}

impl CompletionBackend for CompletionClient {
    fn complete(&self, prompt: &RenderedPrompt, settings: &GenerationSettings) -> Result<Completion> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(settings.request_timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut body = json!({
            "model": self.config.model,
            "prompt": prompt.text,
            "temperature": settings.temperature,
            "top_p": settings.top_p,
            "max_tokens": settings.max_new_tokens,
        });
        if !settings.stop_sequences.is_empty() {
            body["stop"] = json!(settings.stop_sequences);
        }
        if let Some(seed) = settings.seed {
            body["seed"] = json!(seed);
        }
        let (completion, attempts) =
            run_with_retry(&self.config.retry, |i| self.attempt(&agent, prompt, &body, i))?;
        Ok(Completion { attempts, ..completion })
    }

    fn describe(&self) -> String {
        format!("{} @ {}", self.config.model, self.config.base_url)
    }
}
