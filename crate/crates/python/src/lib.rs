//! Python bindings: corpus store, BM25 retrieval, prompt building, answer
//! scoring, noise construction and the experiment runner.

use std::collections::HashSet;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use pinject::bm25::{self, Bm25Params, InvertedIndex, TokenizerOptions};
use pinject::corpus::{self, CorpusStore};
use pinject::gateway;
use pinject::metrics;
use pinject::noise;
use pinject::prompt::{self, ChatTemplate, InstructionSet, Strategy};
use pinject::runner::{self, ExperimentConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Passage", frozen, from_py_object)]
#[derive(Clone)]
struct PyPassage {
    inner: corpus::Passage,
}

#[pymethods]
impl PyPassage {
    #[new]
    #[pyo3(signature = (id, text, title = String::new()))]
    fn new(id: String, text: String, title: String) -> Self {
        Self {
            inner: corpus::Passage::new(id, title, text),
        }
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn title(&self) -> &str {
        &self.inner.title
    }

    #[getter]
    fn text(&self) -> &str {
        &self.inner.text
    }

    fn __repr__(&self) -> String {
        format!("Passage(id={:?}, title={:?})", self.inner.id, self.inner.title)
    }
}

fn wrap(p: corpus::Passage) -> PyPassage {
    PyPassage { inner: p }
}

#[pyclass(name = "Corpus", frozen)]
struct PyCorpus {
    store: CorpusStore,
}

#[pymethods]
impl PyCorpus {
    /// Ingests a JSON-lines corpus and returns (doc_count, malformed line numbers).
    #[staticmethod]
    fn ingest(input: PathBuf, store: PathBuf) -> PyResult<(usize, Vec<usize>)> {
        let report = CorpusStore::ingest(&input, &store).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok((report.handle.doc_count, report.malformed_line_numbers()))
    }

    #[staticmethod]
    fn open(store: PathBuf) -> PyResult<Self> {
        let store = CorpusStore::open(&store).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { store })
    }

    fn __len__(&self) -> usize {
        self.store.len()
    }

    fn __contains__(&self, id: &str) -> bool {
        self.store.contains(id)
    }

    fn get(&self, id: &str) -> PyResult<PyPassage> {
        self.store.get_passage(id).map(wrap).map_err(value_err)
    }

    #[pyo3(signature = (n, seed, exclude = Vec::new()))]
    fn sample(&self, n: usize, seed: u64, exclude: Vec<String>) -> PyResult<Vec<PyPassage>> {
        let exclude: HashSet<String> = exclude.into_iter().collect();
        let passages = self.store.sample_passages(n, seed, &exclude).map_err(value_err)?;
        Ok(passages.into_iter().map(wrap).collect())
    }
}

#[pyclass(name = "Bm25Index", frozen)]
struct PyIndex {
    index: InvertedIndex,
}

#[pymethods]
impl PyIndex {
    #[staticmethod]
    #[pyo3(signature = (corpus, stopwords = false, stem = false))]
    fn build(corpus: &PyCorpus, stopwords: bool, stem: bool) -> PyResult<Self> {
        let opts = TokenizerOptions {
            remove_stopwords: stopwords,
            stem,
        };
        let index = InvertedIndex::build(&corpus.store, opts).map_err(value_err)?;
        Ok(Self { index })
    }

    #[staticmethod]
    fn load(corpus: &PyCorpus) -> PyResult<Self> {
        let index = InvertedIndex::load(&corpus.store).map_err(value_err)?;
        Ok(Self { index })
    }

    fn save(&self, store: PathBuf) -> PyResult<PathBuf> {
        self.index.save(&store).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.index.doc_count()
    }

    /// Top-k (id, score) pairs.
    #[pyo3(signature = (query, k = 5, k1 = 1.2, b = 0.75))]
    fn retrieve(&self, query: &str, k: usize, k1: f64, b: f64) -> PyResult<Vec<(String, f64)>> {
        let params = Bm25Params::new(k1, b).map_err(value_err)?;
        Ok(self
            .index
            .retrieve(query, k, params)
            .hits
            .into_iter()
            .map(|h| (h.id, h.score))
            .collect())
    }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    bm25::tokenize(text)
}

#[pyfunction]
fn normalize_answer(text: &str) -> String {
    metrics::normalize_answer(text)
}

/// (precision, recall, f1) of a prediction against one gold answer.
#[pyfunction]
fn token_f1(prediction: &str, gold: &str) -> (f64, f64, f64) {
    let s = metrics::token_f1(prediction, gold);
    (s.precision, s.recall, s.f1)
}

/// Best F1 over gold aliases.
#[pyfunction]
fn best_f1(prediction: &str, gold_answers: Vec<String>) -> PyResult<f64> {
    metrics::best_over_aliases(prediction, &gold_answers)
        .map(|s| s.f1)
        .map_err(value_err)
}

#[pyfunction]
fn micro_average(scores: Vec<f64>) -> PyResult<f64> {
    metrics::micro_average(&scores).map_err(value_err)
}

/// Renders a prompt and returns (text, sha256 hash).
#[pyfunction]
#[pyo3(signature = (strategy, question, passages = Vec::new(), template = None, instructions = None))]
fn build_prompt(
    strategy: &str,
    question: &str,
    passages: Vec<PyPassage>,
    template: Option<PathBuf>,
    instructions: Option<PathBuf>,
) -> PyResult<(String, String)> {
    let strategy: Strategy = strategy.parse().map_err(value_err)?;
    let template = match template {
        Some(p) => ChatTemplate::load(&p).map_err(value_err)?,
        None => ChatTemplate::qwen3(),
    };
    let instructions = match instructions {
        Some(p) => InstructionSet::load(&p).map_err(value_err)?,
        None => InstructionSet::default(),
    };
    let passages: Vec<corpus::Passage> = passages.into_iter().map(|p| p.inner).collect();
    let (_, rendered) =
        prompt::build_prompt(strategy, question, &passages, &instructions, &template).map_err(value_err)?;
    Ok((rendered.text, rendered.hash))
}

/// (reasoning, answer, terminated)
#[pyfunction]
#[pyo3(signature = (text, close = "</think>"))]
fn split_reasoning(text: &str, close: &str) -> (String, String, bool) {
    let s = gateway::split_reasoning(text, close);
    (s.reasoning.to_string(), s.answer.to_string(), s.terminated)
}

#[pyfunction]
fn extract_answer(answer_text: &str) -> String {
    gateway::extract_answer(answer_text)
}

#[pyfunction]
fn make_counterfactual(passage: &PyPassage, target: &str, distractor: &str) -> PyResult<PyPassage> {
    noise::make_counterfactual(&passage.inner, target, distractor)
        .map(wrap)
        .map_err(value_err)
}

#[pyfunction]
fn pick_distractor(candidates: Vec<String>, target: &str, seed: u64) -> PyResult<String> {
    noise::pick_distractor(&candidates, target, seed).map_err(value_err)
}

#[pyfunction]
fn count_occurrences(text: &str, entity: &str) -> usize {
    noise::count_occurrences(text, entity)
}

/// Runs (or resumes) an experiment config; returns (planned, skipped, added, errors).
#[pyfunction]
fn run_experiment(py: Python<'_>, config: PathBuf) -> PyResult<(usize, usize, usize, usize)> {
    let config = ExperimentConfig::load(&config).map_err(value_err)?;
    let s = py.detach(|| runner::run_matrix(config)).map_err(value_err)?;
    Ok((s.planned, s.skipped, s.added, s.errors))
}

/// Plain-text F1 and length tables for a results file.
#[pyfunction]
fn report(results: PathBuf) -> PyResult<String> {
    let records = runner::load_records(&results).map_err(value_err)?;
    Ok(runner::build_report(&records).map_err(value_err)?.render())
}

#[pymodule]
fn pinject_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPassage>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyIndex>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_answer, m)?)?;
    m.add_function(wrap_pyfunction!(token_f1, m)?)?;
    m.add_function(wrap_pyfunction!(best_f1, m)?)?;
    m.add_function(wrap_pyfunction!(micro_average, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(split_reasoning, m)?)?;
    m.add_function(wrap_pyfunction!(extract_answer, m)?)?;
    m.add_function(wrap_pyfunction!(make_counterfactual, m)?)?;
    m.add_function(wrap_pyfunction!(pick_distractor, m)?)?;
    m.add_function(wrap_pyfunction!(count_occurrences, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
