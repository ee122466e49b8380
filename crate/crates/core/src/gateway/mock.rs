//! Scripted backend: a pure map from prompt hash to continuation text.
//!
//! Script files are JSON lines, `{"prompt_hash": "<sha256>", "response": "…"}`,
//! with an optional `"finish_reason": "length"`. A line whose hash is `*`
//! answers any prompt without its own entry.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Completion, CompletionBackend, FinishReason, GatewayError, GenerationSettings, Result};
use crate::prompt::RenderedPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub prompt_hash: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    script: HashMap<String, (String, FinishReason)>,
    fallback: Option<(String, FinishReason)>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, prompt_hash: impl Into<String>, response: impl Into<String>) -> Self {
        self.insert(ScriptEntry {
            prompt_hash: prompt_hash.into(),
            response: response.into(),
            finish_reason: None,
        });
        self
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some((response.into(), FinishReason::Stop));
        self
    }

    pub fn insert(&mut self, entry: ScriptEntry) {
        let value = (entry.response, entry.finish_reason.unwrap_or(FinishReason::Stop));
        if entry.prompt_hash == "*" {
            self.fallback = Some(value);
        } else {
            self.script.insert(entry.prompt_hash, value);
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut mock = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| GatewayError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
            mock.insert(entry);
        }
        Ok(mock)
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty() && self.fallback.is_none()
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, prompt: &RenderedPrompt, _settings: &GenerationSettings) -> Result<Completion> {
        let (text, finish_reason) = self
            .script
            .get(&prompt.hash)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| GatewayError::Unscripted(prompt.hash.clone()))?;
        Ok(Completion {
            text,
            finish_reason,
            attempts: 1,
        })
    }

    fn describe(&self) -> String {
        format!("mock ({} scripted prompts)", self.script.len())
    }
}
