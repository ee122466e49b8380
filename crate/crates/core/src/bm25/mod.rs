//! Okapi BM25 over an inverted index.
//!
//! Scoring uses the non-negative idf variant
//!
//! ```text
//! idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score(q, d) = Σ_{t in q} idf(t) · tf·(k1 + 1) / (tf + k1·(1 - b + b·dl/avgdl))
//! ```
//!
//! Repeated query terms contribute once per occurrence. Query terms are
//! summed in sorted order so scores do not depend on query word order, down
//! to the last bit.

mod index;
mod tokenize;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use index::{indexed_text, InvertedIndex, Posting, INDEX_FILE};
pub use tokenize::{tokenize, tokenize_with, TokenizerOptions};

use crate::corpus::CorpusError;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("empty corpus: refusing to build an index")]
    EmptyCorpus,
    #[error("no index at {0}; run `index build` first")]
    Missing(PathBuf),
    #[error("index was built from a different corpus; rebuild it")]
    Stale,
    #[error("index file is corrupt: {0}")]
    Corrupt(String),
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = IndexError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
}

fn default_k1() -> f64 {
    1.2
}

fn default_b() -> f64 {
    0.75
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: default_k1(),
            b: default_b(),
        }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let p = Self { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(IndexError::InvalidParams(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(IndexError::InvalidParams(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub hits: Vec<Hit>,
    /// Set when the query has no terms after tokenization.
    pub empty_query: bool,
}

impl RetrievalResult {
    pub fn ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.id.as_str()).collect()
    }
}

/// idf as a function of collection size and document frequency.
pub fn idf_for(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// One term's contribution for a document with frequency `tf` and length `dl`.
pub fn term_weight(idf: f64, tf: f64, dl: f64, avg_dl: f64, params: Bm25Params) -> f64 {
    idf * (tf * (params.k1 + 1.0)) / (tf + params.k1 * (1.0 - params.b + params.b * dl / avg_dl))
}

impl InvertedIndex {
    pub fn idf(&self, term: &str) -> f64 {
        idf_for(self.doc_count(), self.postings(term).len())
    }

    /// Top-`k` documents by BM25, ties broken by ascending passage id.
    /// Documents sharing no term with the query are never returned.
    pub fn retrieve(&self, query: &str, k: usize, params: Bm25Params) -> RetrievalResult {
        let mut terms = tokenize_with(query, self.tokenizer());
        let empty_query = terms.is_empty();
        if empty_query {
            log::warn!("query {query:?} has no terms after tokenization");
        }
        if k == 0 || empty_query {
            return RetrievalResult {
                query: query.to_string(),
                hits: Vec::new(),
                empty_query,
            };
        }
        terms.sort_unstable();

        let avg_dl = self.avg_doc_len();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = idf_for(self.doc_count(), postings.len());
            for p in postings {
                let dl = self.doc_lengths()[p.doc as usize] as f64;
                *scores.entry(p.doc).or_insert(0.0) += term_weight(idf, p.tf as f64, dl, avg_dl, params);
            }
        }

        let hits = top_k(
            scores.into_iter().map(|(doc, score)| (self.doc_id(doc), score)),
            k,
        );
        RetrievalResult {
            query: query.to_string(),
            hits,
            empty_query: false,
        }
    }
}

/// Ranking order: higher score first, then smaller id.
fn rank_cmp(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

struct Ranked<'a> {
    id: &'a str,
    score: f64,
}

// The heap keeps the worst retained candidate on top.
impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp((self.id, self.score), (other.id, other.score))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

/// Bounded selection: keeps at most `k` candidates in a heap.
fn top_k<'a>(candidates: impl Iterator<Item = (&'a str, f64)>, k: usize) -> Vec<Hit> {
    let mut heap: BinaryHeap<Ranked<'a>> = BinaryHeap::with_capacity(k + 1);
    for (id, score) in candidates {
        let cand = Ranked { id, score };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(worst) = heap.peek() {
            if cand < *worst {
                heap.pop();
                heap.push(cand);
            }
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|r| Hit {
            id: r.id.to_string(),
            score: r.score,
        })
        .collect()
}
