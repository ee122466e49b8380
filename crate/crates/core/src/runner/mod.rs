//! Experiment matrix: (question × strategy × k) cells under one evidence
//! condition, written to an append-only results file and resumable.
//!
//! Cells are independent. Up to `concurrency` of them are in flight at a
//! time; a single writer serializes appends. Failures never abort a run:
//! the cell is stored with `finish_reason = error`, an error message and
//! F1 = 0.

mod config;
mod report;
mod results;
mod verify;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{Condition, DatasetSource, EndpointSpec, ExperimentConfig, SNAPSHOT_FILE};
pub use report::{build_report, length_table, F1Row, F1Table, LengthCell, Report, ReportCell};
pub use results::{load_records, ResultsWriter, RESULTS_FILE};
pub use verify::{verify_results, VerifyReport};

use crate::bm25::InvertedIndex;
use crate::corpus::{CorpusStore, Passage};
use crate::datasets::{self, Dataset, QuestionRecord, Subset};
use crate::gateway::{self, CompletionBackend, CompletionClient, GenerationOutcome, MockBackend};
use crate::metrics::{best_over_aliases, HasCharLen, HasF1, ScoreTriple};
use crate::noise::{make_random_noise, NoiseSpec};
use crate::prompt::{self, ChatTemplate, InstructionSet, Strategy};
use crate::rng::{derive_seed, SAMPLER_VERSION};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("results file {path}: {message}")]
    Results { path: PathBuf, message: String },
    #[error("no results to report")]
    Empty,
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Index(#[from] crate::bm25::IndexError),
    #[error(transparent)]
    Dataset(#[from] crate::datasets::DatasetError),
    #[error(transparent)]
    Prompt(#[from] crate::prompt::PromptError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;

/// Everything needed to regenerate a cell's evidence and prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base_seed: u64,
    pub record_seed: u64,
    pub sampler: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub k1: f64,
    pub b: f64,
    pub noise_n: usize,
    pub instructions_digest: String,
    pub template_name: String,
    pub template_digest: String,
    pub corpus_digest: Option<String>,
    pub model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey<'a> {
    pub question_id: &'a str,
    pub strategy: Strategy,
    pub k: usize,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub question_id: String,
    pub dataset: Dataset,
    pub subset: Subset,
    pub strategy: Strategy,
    /// Passage budget; 0 for conditions that ignore k.
    pub k: usize,
    pub condition: Condition,
    /// Empty when the cell failed before a prompt existed.
    pub prompt_hash: String,
    pub passages_digest: String,
    pub passage_ids: Vec<String>,
    pub outcome: GenerationOutcome,
    pub extracted_answer: String,
    pub score: ScoreTriple,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub provenance: Provenance,
}

impl RunRecord {
    pub fn key(&self) -> CellKey<'_> {
        CellKey {
            question_id: &self.question_id,
            strategy: self.strategy,
            k: self.k,
            condition: self.condition,
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

impl HasF1 for RunRecord {
    fn f1(&self) -> f64 {
        self.score.f1
    }
}

impl HasCharLen for RunRecord {
    fn char_len(&self) -> usize {
        self.outcome.char_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub planned: usize,
    pub skipped: usize,
    pub added: usize,
    pub errors: usize,
}

/// Loaded inputs shared read-only by all workers.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub questions: Vec<QuestionRecord>,
    pub store: Option<CorpusStore>,
    pub index: Option<InvertedIndex>,
    pub template: ChatTemplate,
    pub instructions: InstructionSet,
}

impl RunContext {
    /// Validates the config and loads every dependency of its condition.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut questions = Vec::new();
        for source in &config.datasets {
            let records = match source.dataset {
                Some(Dataset::ConfiQa) => datasets::load_confiqa(&source.path)?,
                Some(d) => datasets::load_dataset(&source.path, d)?,
                None => datasets::load_any(&source.path)?,
            };
            questions.extend(records);
        }
        let mut seen = HashSet::new();
        if let Some(dup) = questions.iter().find(|q| !seen.insert(q.id.as_str())) {
            return Err(RunError::Config(format!("question id {} appears more than once", dup.id)));
        }

        let store = match &config.store_dir {
            Some(dir) => Some(CorpusStore::open(dir)?),
            None => None,
        };
        let index = match (config.condition, &store) {
            (Condition::Retrieved, Some(s)) => Some(InvertedIndex::load(s)?),
            _ => None,
        };
        let template = match &config.template {
            Some(p) => ChatTemplate::load(p)?,
            None => ChatTemplate::qwen3(),
        };
        let instructions = match &config.instructions {
            Some(p) => InstructionSet::load(p)?,
            None => InstructionSet::default(),
        };
        Ok(Self {
            config,
            questions,
            store,
            index,
            template,
            instructions,
        })
    }

    pub fn question(&self, id: &str) -> Option<&QuestionRecord> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn provenance(&self, record_seed: u64, model: &str) -> Provenance {
        let c = &self.config;
        Provenance {
            base_seed: c.seed,
            record_seed,
            sampler: SAMPLER_VERSION.to_string(),
            temperature: c.settings.temperature,
            top_p: c.settings.top_p,
            max_new_tokens: c.settings.max_new_tokens,
            k1: c.bm25.k1,
            b: c.bm25.b,
            noise_n: c.noise_n,
            instructions_digest: self.instructions.digest(),
            template_name: self.template.name.clone(),
            template_digest: self.template.digest(),
            corpus_digest: self.store.as_ref().map(|s| s.handle().source_digest.clone()),
            model: model.to_string(),
        }
    }

    /// Evidence passages for one cell under the configured condition.
    pub fn evidence(&self, q: &QuestionRecord, strategy: Strategy, k: usize) -> std::result::Result<Vec<Passage>, String> {
        if !strategy.uses_passages() {
            return Ok(Vec::new());
        }
        let c = &self.config;
        match c.condition {
            Condition::Retrieved => {
                let (index, store) = match (&self.index, &self.store) {
                    (Some(i), Some(s)) => (i, s),
                    _ => return Err("retrieval needs a corpus store and index".into()),
                };
                index
                    .retrieve(&q.question, k, c.bm25)
                    .hits
                    .iter()
                    .map(|h| store.get_passage(&h.id).map_err(|e| e.to_string()))
                    .collect()
            }
            Condition::RandomNoise => {
                let store = self.store.as_ref().ok_or("random noise needs a corpus store")?;
                let spec = NoiseSpec::random(derive_seed(c.seed, &q.id)).with_n(c.noise_n);
                make_random_noise(q, store, spec).map_err(|e| format!("question {}: {e}", q.id))
            }
            Condition::Counterfactual => {
                if q.attached().is_empty() {
                    return Err(format!("question {}: no attached counterfactual context", q.id));
                }
                Ok(q.attached().to_vec())
            }
            Condition::Gold => {
                let gold = datasets::gold_passages(q, self.store.as_ref()).map_err(|e| e.to_string())?;
                for w in &gold.warnings {
                    log::warn!("{w}");
                }
                Ok(gold.passages)
            }
        }
    }

    /// Every cell of the matrix, in deterministic order.
    pub fn cells(&self) -> Vec<(usize, Strategy, usize)> {
        let ks = self.config.effective_k_values();
        let mut out = Vec::new();
        for (qi, _) in self.questions.iter().enumerate() {
            for &s in &self.config.strategies {
                for &k in &ks {
                    out.push((qi, s, k));
                }
            }
        }
        out
    }

    /// Runs one cell to a record. Never fails: errors become error cells.
    pub fn run_cell(&self, backend: &dyn CompletionBackend, q: &QuestionRecord, strategy: Strategy, k: usize) -> RunRecord {
        let started_at = now();
        let record_seed = derive_seed(self.config.seed, &q.id);
        let mut rec = RunRecord {
            question_id: q.id.clone(),
            dataset: q.dataset,
            subset: q.subset,
            strategy,
            k,
            condition: self.config.condition,
            prompt_hash: String::new(),
            passages_digest: String::new(),
            passage_ids: Vec::new(),
            outcome: GenerationOutcome::failed(0),
            extracted_answer: String::new(),
            score: ScoreTriple::ZERO,
            attempts: 0,
            error: None,
            started_at,
            finished_at: String::new(),
            provenance: self.provenance(record_seed, &backend.describe()),
        };
        if let Err(e) = self.fill_cell(backend, q, &mut rec) {
            log::warn!("cell {} {} k={} failed: {e}", q.id, strategy, k);
            rec.error = Some(e);
            rec.score = ScoreTriple::ZERO;
        }
        rec.finished_at = now();
        rec
    }

    fn fill_cell(&self, backend: &dyn CompletionBackend, q: &QuestionRecord, rec: &mut RunRecord) -> std::result::Result<(), String> {
        let passages = self.evidence(q, rec.strategy, rec.k)?;
        rec.passage_ids = passages.iter().map(|p| p.id.clone()).collect();
        let (plan, rendered) = prompt::build_prompt(rec.strategy, &q.question, &passages, &self.instructions, &self.template)
            .map_err(|e| e.to_string())?;
        rec.prompt_hash = rendered.hash.clone();
        rec.passages_digest = plan.passages_digest;
        let (outcome, attempts) = gateway::generate(backend, &rendered, &self.config.settings, &self.template.reasoning_close)
            .map_err(|e| e.to_string())?;
        rec.attempts = attempts;
        rec.extracted_answer = gateway::extract_answer(&outcome.answer_text);
        rec.outcome = outcome;
        rec.score = best_over_aliases(&rec.extracted_answer, &q.gold_answers).map_err(|e| e.to_string())?;
        Ok(())
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Builds the backend named by the config's endpoint section.
pub fn backend_for(spec: &EndpointSpec) -> Result<Box<dyn CompletionBackend>> {
    Ok(match spec {
        EndpointSpec::Mock { script } => Box::new(MockBackend::load(script)?),
        EndpointSpec::Openai(c) => Box::new(CompletionClient::new(c.clone())?),
    })
}

/// Runs the config against its own endpoint.
pub fn run_matrix(config: ExperimentConfig) -> Result<RunSummary> {
    let ctx = RunContext::prepare(config)?;
    let backend = backend_for(&ctx.config.endpoint)?;
    run_with_backend(&ctx, backend.as_ref())
}

/// Runs every missing cell of `ctx` against `backend`.
pub fn run_with_backend(ctx: &RunContext, backend: &dyn CompletionBackend) -> Result<RunSummary> {
    let out = &ctx.config.output_dir;
    std::fs::create_dir_all(out)?;
    let snapshot = serde_json::to_string_pretty(&ctx.config).expect("config serializes");
    std::fs::write(out.join(SNAPSHOT_FILE), snapshot)?;

    let (mut writer, existing) = ResultsWriter::open(&out.join(RESULTS_FILE))?;
    let done: HashSet<CellKey<'_>> = existing.iter().map(RunRecord::key).collect();
    let cells = ctx.cells();
    let pending: Vec<_> = cells
        .iter()
        .filter(|(qi, s, k)| {
            !done.contains(&CellKey {
                question_id: &ctx.questions[*qi].id,
                strategy: *s,
                k: *k,
                condition: ctx.config.condition,
            })
        })
        .copied()
        .collect();
    let mut summary = RunSummary {
        planned: cells.len(),
        skipped: cells.len() - pending.len(),
        ..RunSummary::default()
    };
    log::info!(
        "{} cells planned, {} already done, {} to run on {}",
        summary.planned,
        summary.skipped,
        pending.len(),
        backend.describe()
    );

    let next = AtomicUsize::new(0);
    let workers = ctx.config.concurrency.min(pending.len()).max(1);
    let write_result: Result<()> = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<RunRecord>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(qi, strategy, k)) = pending.get(i) else { break };
                let rec = ctx.run_cell(backend, &ctx.questions[qi], strategy, k);
                if tx.send(rec).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for rec in rx {
            if let Err(e) = writer.append(&rec) {
                // Stop handing out work; in-flight cells finish and are dropped.
                next.store(usize::MAX / 2, Ordering::Relaxed);
                return Err(e);
            }
            summary.added += 1;
            summary.errors += usize::from(rec.is_error());
        }
        Ok(())
    });
    write_result?;
    Ok(summary)
}

/// Counts of records per key; any value above one violates uniqueness.
pub fn duplicate_keys(records: &[RunRecord]) -> Vec<String> {
    let mut counts: HashMap<CellKey<'_>, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.key()).or_default() += 1;
    }
    let mut dups: Vec<String> = counts
        .into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|(k, n)| format!("{}/{}/k={}/{} x{n}", k.question_id, k.strategy.as_str(), k.k, k.condition))
        .collect();
    dups.sort();
    dups
}
