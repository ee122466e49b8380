use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_toml, PromptError, Result};
use crate::digest::sha256_hex;

const QWEN3_TEMPLATE: &str = include_str!("../../resources/qwen3.toml");
const DEFAULT_INSTRUCTIONS: &str = include_str!("../../resources/instructions.toml");

/// Chat markup for one model family, loaded from a TOML file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatTemplate {
    pub name: String,
    pub system_open: String,
    pub system_close: String,
    pub user_open: String,
    pub user_close: String,
    pub assistant_open: String,
    #[serde(default = "default_reasoning_open")]
    pub reasoning_open: String,
    #[serde(default = "default_reasoning_close")]
    pub reasoning_close: String,
}

fn default_reasoning_open() -> String {
    "<think>".into()
}

fn default_reasoning_close() -> String {
    "</think>".into()
}

impl ChatTemplate {
    pub fn qwen3() -> Self {
        Self::from_toml(QWEN3_TEMPLATE).expect("bundled template is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let t: Self = toml::from_str(text).map_err(|e| PromptError::InvalidTemplate(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: Self = read_toml(path)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let markers = [
            ("name", &self.name),
            ("system_open", &self.system_open),
            ("system_close", &self.system_close),
            ("user_open", &self.user_open),
            ("user_close", &self.user_close),
            ("assistant_open", &self.assistant_open),
            ("reasoning_open", &self.reasoning_open),
            ("reasoning_close", &self.reasoning_close),
        ];
        if let Some((field, _)) = markers.iter().find(|(_, v)| v.is_empty()) {
            return Err(PromptError::InvalidTemplate(format!("{field} is empty")));
        }
        if self.reasoning_open == self.reasoning_close {
            return Err(PromptError::InvalidTemplate(
                "reasoning_open and reasoning_close must differ".into(),
            ));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("template serializes"))
    }
}

impl Default for ChatTemplate {
    fn default() -> Self {
        Self::qwen3()
    }
}

/// Editable prompt wording, keyed by strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionSet {
    pub system: String,
    pub instruction_injection: String,
    pub passage_injection: String,
}

impl InstructionSet {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| PromptError::InvalidInstructions(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: Self = read_toml(path)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruction_injection.trim().is_empty() || self.passage_injection.trim().is_empty() {
            return Err(PromptError::InvalidInstructions(
                "injection instructions must not be empty".into(),
            ));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("instructions serialize"))
    }
}

impl Default for InstructionSet {
    fn default() -> Self {
        Self::from_toml(DEFAULT_INSTRUCTIONS).expect("bundled instructions are valid")
    }
}
