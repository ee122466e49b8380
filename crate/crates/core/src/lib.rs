//! Reasoning-phase passage injection for retrieval-augmented generation.
//!
//! The crate is a small evaluation harness for reasoning-enhanced models
//! (models that think inside `<think>…</think>` before answering). It covers
//! the full retrieve-then-read loop:
//!
//! * [`corpus`]: on-disk passage store with id lookup and seeded sampling.
//! * [`bm25`]: tokenizer, inverted index and top-k BM25 retrieval.
//! * [`datasets`]: normalized QA record schema and loaders.
//! * [`noise`]: random-noise and counterfactual (entity-swap) evidence.
//! * [`prompt`]: the four prompt strategies (direct QA, vanilla RAG,
//!   instruction injection, passage injection) and chat-template rendering.
//! * [`gateway`]: text-completion client, scripted mock backend, and
//!   reasoning/answer splitting.
//! * [`metrics`]: answer normalization, token F1 and averages.
//! * [`runner`]: resumable experiment matrix, reports and provenance checks.

pub mod bm25;
pub mod corpus;
pub mod datasets;
pub mod digest;
pub mod gateway;
pub mod metrics;
pub mod noise;
pub mod prompt;
pub mod rng;
pub mod runner;

pub use bm25::{Bm25Params, InvertedIndex, RetrievalResult};
pub use corpus::{CorpusHandle, CorpusStore, Passage};
pub use datasets::{Dataset, QuestionRecord, Subset};
pub use gateway::{GenerationOutcome, GenerationSettings};
pub use metrics::ScoreTriple;
pub use prompt::{ChatTemplate, InstructionSet, PromptPlan, RenderedPrompt, Strategy};
pub use runner::{ExperimentConfig, RunRecord};
