use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Result, RunError};
use crate::bm25::Bm25Params;
use crate::datasets::Dataset;
use crate::gateway::{EndpointConfig, GenerationSettings};
use crate::noise::DEFAULT_RANDOM_PASSAGES;
use crate::prompt::Strategy;

/// Written next to `results.jsonl` so `verify` can rebuild every prompt.
pub const SNAPSHOT_FILE: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Retrieved,
    RandomNoise,
    Counterfactual,
    Gold,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Retrieved => "retrieved",
            Condition::RandomNoise => "random_noise",
            Condition::Counterfactual => "counterfactual",
            Condition::Gold => "gold",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [
            Condition::Retrieved,
            Condition::RandomNoise,
            Condition::Counterfactual,
            Condition::Gold,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

/// One normalized dataset file. Without `dataset`, any label is accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub path: PathBuf,
    #[serde(default)]
    pub dataset: Option<Dataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EndpointSpec {
    Openai(EndpointConfig),
    Mock { script: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    pub condition: Condition,
    pub store_dir: Option<PathBuf>,
    /// Chat template TOML; the bundled qwen3 template when absent.
    #[serde(default)]
    pub template: Option<PathBuf>,
    /// Instruction TOML; the bundled wording when absent.
    #[serde(default)]
    pub instructions: Option<PathBuf>,
    pub endpoint: EndpointSpec,
    #[serde(default)]
    pub settings: GenerationSettings,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default = "default_noise_n")]
    pub noise_n: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

fn default_k_values() -> Vec<usize> {
    vec![1, 3, 5]
}

fn default_noise_n() -> usize {
    DEFAULT_RANDOM_PASSAGES
}

fn default_concurrency() -> usize {
    4
}

impl ExperimentConfig {
    /// Parses a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            fix(&mut d.path);
        }
        for p in [&mut self.store_dir, &mut self.template, &mut self.instructions]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        match &mut self.endpoint {
            EndpointSpec::Mock { script } => fix(script),
            EndpointSpec::Openai(c) => {
                if let Some(dir) = &mut c.log_dir {
                    fix(dir);
                }
            }
        }
        fix(&mut self.output_dir);
    }

    /// k values that produce cells; other conditions run once with k = 0.
    pub fn effective_k_values(&self) -> Vec<usize> {
        match self.condition {
            Condition::Retrieved => self.k_values.clone(),
            _ => vec![0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RunError::Config(m.to_string()));
        if self.datasets.is_empty() {
            return bad("datasets is empty");
        }
        if self.strategies.is_empty() {
            return bad("strategies is empty");
        }
        let unique: HashSet<_> = self.strategies.iter().collect();
        if unique.len() != self.strategies.len() {
            return bad("strategies contains duplicates");
        }
        if self.condition == Condition::Retrieved {
            if self.k_values.is_empty() || self.k_values.contains(&0) {
                return bad("k_values must be non-empty and positive for the retrieved condition");
            }
            let unique: HashSet<_> = self.k_values.iter().collect();
            if unique.len() != self.k_values.len() {
                return bad("k_values contains duplicates");
            }
        }
        if matches!(self.condition, Condition::Retrieved | Condition::RandomNoise) && self.store_dir.is_none() {
            return bad("store_dir is required for the retrieved and random_noise conditions");
        }
        if self.noise_n == 0 {
            return bad("noise_n must be > 0");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be > 0");
        }
        self.bm25.validate().map_err(|e| RunError::Config(e.to_string()))?;
        self.settings.validate().map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }
}
