//! Controlled noise: random irrelevant passages and counterfactual passages
//! whose key entity has been swapped for a same-type distractor.
//!
//! Entity typing is the caller's job: distractor candidates come from a
//! pool file, one JSON object per line:
//!
//! ```json
//! {"id": "q17", "target": "United Kingdom", "candidates": ["United States", "France"]}
//! {"id": "*", "candidates": ["Germany", "Spain"]}
//! ```
//!
//! `id` is a question id or `*` for the fallback pool; `target` defaults to
//! the question's first gold answer.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use regex::{NoExpand, Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusStore, Passage};
use crate::datasets::{gold_passages, QuestionRecord};
use crate::rng::{derive_seed, SeededRng};

/// Replacement passes allowed before giving up on a pathological
/// target/distractor pair.
const MAX_REPLACEMENT_PASSES: usize = 32;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("entity not found: {0:?}")]
    EntityNotFound(String),
    #[error("distractor {distractor:?} matches target {target:?}")]
    DistractorIsTarget { target: String, distractor: String },
    #[error("distractor {distractor:?} contains target {target:?}")]
    DistractorContainsTarget { target: String, distractor: String },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("replacing {0:?} did not converge")]
    NotConverged(String),
    #[error("no distractor candidates left after removing {0:?}")]
    EmptyPool(String),
    #[error("random noise needs n >= 1")]
    InvalidCount,
    #[error("distractor pool line {line}: {message}")]
    Pool { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NoiseError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Random,
    Counterfactual,
}

pub const DEFAULT_RANDOM_PASSAGES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub n: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn random(seed: u64) -> Self {
        Self {
            kind: NoiseKind::Random,
            n: DEFAULT_RANDOM_PASSAGES,
            seed,
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == NoiseKind::Random && self.n == 0 {
            return Err(NoiseError::InvalidCount);
        }
        Ok(())
    }
}

/// Samples `spec.n` corpus passages that are not gold for `record`.
pub fn make_random_noise(record: &QuestionRecord, corpus: &CorpusStore, spec: NoiseSpec) -> Result<Vec<Passage>> {
    spec.validate()?;
    let exclude: HashSet<String> = record.gold_passage_ids.iter().cloned().collect();
    Ok(corpus.sample_passages(spec.n, spec.seed, &exclude)?)
}

fn entity_pattern(entity: &str) -> Regex {
    RegexBuilder::new(&regex::escape(entity))
        .case_insensitive(true)
        .build()
        .expect("escaped literal is a valid pattern")
}

/// Counts case-insensitive occurrences of `entity` in `text`.
pub fn count_occurrences(text: &str, entity: &str) -> usize {
    if entity.is_empty() {
        return 0;
    }
    entity_pattern(entity).find_iter(text).count()
}

fn same_entity(a: &str, b: &str) -> bool {
    let pat = entity_pattern(a);
    pat.find(b).is_some_and(|m| m.start() == 0 && m.end() == b.len())
}

fn replace_all(pattern: &Regex, text: &str, distractor: &str, target: &str) -> Result<String> {
    let mut out = text.to_string();
    for _ in 0..MAX_REPLACEMENT_PASSES {
        if !pattern.is_match(&out) {
            return Ok(out);
        }
        out = pattern.replace_all(&out, NoExpand(distractor)).into_owned();
    }
    if pattern.is_match(&out) {
        Err(NoiseError::NotConverged(target.to_string()))
    } else {
        Ok(out)
    }
}

/// Replaces every case-insensitive occurrence of `target_entity` in the
/// passage text and title with `distractor`. The result's id is the
/// original id with `#cf` appended.
///
/// Replacement is literal: no inflection handling. Distractors that contain
/// the target are refused, since the target would survive the swap.
pub fn make_counterfactual(passage: &Passage, target_entity: &str, distractor: &str) -> Result<Passage> {
    if target_entity.trim().is_empty() {
        return Err(NoiseError::Empty("target entity"));
    }
    if distractor.trim().is_empty() {
        return Err(NoiseError::Empty("distractor"));
    }
    if same_entity(target_entity, distractor) {
        return Err(NoiseError::DistractorIsTarget {
            target: target_entity.to_string(),
            distractor: distractor.to_string(),
        });
    }
    let pattern = entity_pattern(target_entity);
    if pattern.is_match(distractor) {
        return Err(NoiseError::DistractorContainsTarget {
            target: target_entity.to_string(),
            distractor: distractor.to_string(),
        });
    }
    if !pattern.is_match(&passage.text) {
        return Err(NoiseError::EntityNotFound(target_entity.to_string()));
    }
    Ok(Passage {
        id: format!("{}#cf", passage.id),
        title: replace_all(&pattern, &passage.title, distractor, target_entity)?,
        text: replace_all(&pattern, &passage.text, distractor, target_entity)?,
    })
}

/// Seeded choice of a distractor that is not the target.
pub fn pick_distractor<S: AsRef<str>>(candidates: &[S], target: &str, seed: u64) -> Result<String> {
    let pool: Vec<&str> = candidates
        .iter()
        .map(AsRef::as_ref)
        .filter(|c| !c.trim().is_empty() && !same_entity(target, c))
        .collect();
    if pool.is_empty() {
        return Err(NoiseError::EmptyPool(target.to_string()));
    }
    let i = SeededRng::new(seed).below(pool.len() as u64) as usize;
    Ok(pool[i].to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistractorEntry {
    pub id: String,
    #[serde(default)]
    pub target: Option<String>,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct DistractorPool {
    by_question: HashMap<String, DistractorEntry>,
    fallback: Option<DistractorEntry>,
}

impl DistractorPool {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut pool = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: DistractorEntry = serde_json::from_str(line).map_err(|e| NoiseError::Pool {
                line: i + 1,
                message: e.to_string(),
            })?;
            pool.insert(entry);
        }
        Ok(pool)
    }

    pub fn insert(&mut self, entry: DistractorEntry) {
        if entry.id == "*" {
            self.fallback = Some(entry);
        } else {
            self.by_question.insert(entry.id.clone(), entry);
        }
    }

    pub fn entry_for(&self, question_id: &str) -> Option<&DistractorEntry> {
        self.by_question.get(question_id).or(self.fallback.as_ref())
    }
}

/// Builds a counterfactual context for one record: picks a distractor for
/// the target entity and rewrites every gold passage that mentions it.
pub fn counterfactual_context(
    record: &QuestionRecord,
    corpus: Option<&CorpusStore>,
    pool: &DistractorPool,
    base_seed: u64,
) -> std::result::Result<Vec<Passage>, String> {
    let entry = pool
        .entry_for(&record.id)
        .ok_or_else(|| format!("question {}: no distractor entry", record.id))?;
    let target = entry.target.clone().unwrap_or_else(|| record.gold_answers[0].clone());
    let gold = gold_passages(record, corpus).map_err(|e| e.to_string())?;
    let distractor = pick_distractor(&entry.candidates, &target, derive_seed(base_seed, &record.id))
        .map_err(|e| format!("question {}: {e}", record.id))?;
    let mut out = Vec::new();
    for p in &gold.passages {
        match make_counterfactual(p, &target, &distractor) {
            Ok(cf) => out.push(cf),
            Err(NoiseError::EntityNotFound(_)) => continue,
            Err(e) => return Err(format!("question {}: {e}", record.id)),
        }
    }
    if out.is_empty() {
        return Err(format!(
            "question {}: target {target:?} occurs in no gold passage",
            record.id
        ));
    }
    Ok(out)
}
