//! Prompt strategies and chat-template rendering.
//!
//! A reasoning model's output has three phases: the input (system and user
//! turns), the reasoning phase between `<think>` and `</think>`, and the
//! response after `</think>`. Every strategy renders a prompt that ends
//! inside the reasoning phase, so the harness decides what the model's
//! thinking starts with:
//!
//! | strategy                | passages in      | reasoning prefill                        |
//! |-------------------------|------------------|------------------------------------------|
//! | `direct_qa`             | nowhere          | `<think>\n`                              |
//! | `vanilla_rag`           | user turn        | `<think>\n`                              |
//! | `instruction_injection` | user turn        | `<think>\n` + instruction                |
//! | `passage_injection`     | reasoning phase  | `<think>\n` + instruction + passages     |

mod template;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use template::{ChatTemplate, InstructionSet};

use crate::corpus::Passage;
use crate::digest::{sha256_hex, sha256_parts_hex};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("strategy accepts no passages")]
    PassagesNotAccepted,
    #[error("invalid chat template: {0}")]
    InvalidTemplate(String),
    #[error("invalid instruction set: {0}")]
    InvalidInstructions(String),
    #[error("cannot read {path}: {message}")]
    Load { path: String, message: String },
}

pub type Result<T, E = PromptError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    DirectQa,
    VanillaRag,
    InstructionInjection,
    PassageInjection,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::DirectQa,
        Strategy::VanillaRag,
        Strategy::InstructionInjection,
        Strategy::PassageInjection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::DirectQa => "direct_qa",
            Strategy::VanillaRag => "vanilla_rag",
            Strategy::InstructionInjection => "instruction_injection",
            Strategy::PassageInjection => "passage_injection",
        }
    }

    pub fn uses_passages(self) -> bool {
        self != Strategy::DirectQa
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

/// Strategy-resolved placement of question, instruction and passages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPlan {
    pub strategy: Strategy,
    pub system_text: String,
    pub input_segment: String,
    pub reasoning_prefill: String,
    pub passages_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub template_name: String,
    pub hash: String,
}

impl RenderedPrompt {
    /// Wraps raw prompt text; the hash is always derived from `text`.
    pub fn new(text: String, template_name: impl Into<String>) -> Self {
        Self {
            hash: prompt_hash(&text),
            text,
            template_name: template_name.into(),
        }
    }
}

pub fn prompt_hash(text: &str) -> String {
    sha256_hex(text.as_bytes())
}

/// `[i] title\ntext` per passage, 1-indexed, separated by blank lines.
pub fn format_passages(passages: &[Passage]) -> String {
    passages
        .iter()
        .enumerate()
        .map(|(i, p)| format!("[{}] {}\n{}", i + 1, p.title, p.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn passages_digest(passages: &[Passage]) -> String {
    let mut parts: Vec<&[u8]> = Vec::with_capacity(passages.len() * 3);
    for p in passages {
        parts.extend([p.id.as_bytes(), p.title.as_bytes(), p.text.as_bytes()]);
    }
    sha256_parts_hex(&parts)
}

/// Places the question, instruction and passages for `strategy`.
pub fn assemble(
    strategy: Strategy,
    question: &str,
    passages: &[Passage],
    instructions: &InstructionSet,
    template: &ChatTemplate,
) -> Result<PromptPlan> {
    if strategy == Strategy::DirectQa && !passages.is_empty() {
        return Err(PromptError::PassagesNotAccepted);
    }
    let open = format!("{}\n", template.reasoning_open);
    let with_passages = || format!("Passages:\n{}\n\nQuestion: {}", format_passages(passages), question);

    let (input_segment, reasoning_prefill) = match strategy {
        Strategy::DirectQa => (question.to_string(), open),
        Strategy::VanillaRag => (with_passages(), open),
        Strategy::InstructionInjection => (
            with_passages(),
            format!("{open}{}\n\n", instructions.instruction_injection),
        ),
        Strategy::PassageInjection => (
            question.to_string(),
            format!(
                "{open}{}\n\n{}\n\n",
                instructions.passage_injection,
                format_passages(passages)
            ),
        ),
    };

    Ok(PromptPlan {
        strategy,
        system_text: instructions.system.clone(),
        input_segment,
        reasoning_prefill,
        passages_digest: passages_digest(passages),
    })
}

/// Flattens a plan into the text the model continues from.
pub fn render(plan: &PromptPlan, template: &ChatTemplate) -> RenderedPrompt {
    let t = template;
    let text = [
        t.system_open.as_str(),
        plan.system_text.as_str(),
        t.system_close.as_str(),
        t.user_open.as_str(),
        plan.input_segment.as_str(),
        t.user_close.as_str(),
        t.assistant_open.as_str(),
        plan.reasoning_prefill.as_str(),
    ]
    .concat();
    RenderedPrompt::new(text, t.name.clone())
}

/// Assemble and render in one step.
pub fn build_prompt(
    strategy: Strategy,
    question: &str,
    passages: &[Passage],
    instructions: &InstructionSet,
    template: &ChatTemplate,
) -> Result<(PromptPlan, RenderedPrompt)> {
    let plan = assemble(strategy, question, passages, instructions, template)?;
    let rendered = render(&plan, template);
    Ok((plan, rendered))
}

pub(crate) fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let load_err = |message: String| PromptError::Load {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
    toml::from_str(&text).map_err(|e| load_err(e.to_string()))
}
