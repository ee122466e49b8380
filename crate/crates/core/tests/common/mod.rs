#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use pinject::bm25::{InvertedIndex, TokenizerOptions};
use pinject::corpus::CorpusStore;
use pinject::gateway::MockBackend;
use pinject::prompt::{self, Strategy};
use pinject::runner::{ExperimentConfig, RunContext};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Ingests the fixture corpus into `dir/store` and indexes it.
pub fn fixture_store(dir: &Path) -> PathBuf {
    let store = dir.join("store");
    CorpusStore::ingest(&fixture("corpus.jsonl"), &store).unwrap();
    let corpus = CorpusStore::open(&store).unwrap();
    InvertedIndex::build(&corpus, TokenizerOptions::default())
        .unwrap()
        .save(&store)
        .unwrap();
    store
}

/// A config over `dataset` with a mock endpoint; extra TOML lines are
/// appended before the endpoint table.
pub fn config(dir: &Path, dataset: &Path, condition: &str, strategies: &[Strategy], extra: &str) -> ExperimentConfig {
    let strategies: Vec<String> = strategies.iter().map(|s| format!("\"{s}\"")).collect();
    let text = format!(
        r#"
datasets = [{{ path = {dataset:?} }}]
strategies = [{}]
condition = "{condition}"
store_dir = {store:?}
output_dir = {out:?}
{extra}

[endpoint]
kind = "mock"
script = {script:?}
"#,
        strategies.join(", "),
        store = dir.join("store"),
        out = dir.join("out"),
        script = dir.join("script.jsonl"),
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

/// Continuation text for a scripted answer.
pub fn continuation(reasoning: &str, answer: &str) -> String {
    format!("{reasoning}\n</think>\n\nAnswer: {answer}")
}

/// Scripts `answers[(question id, strategy)]` for every cell of `ctx`.
pub fn script_answers(ctx: &RunContext, answers: &HashMap<(&str, Strategy), String>) -> MockBackend {
    let mut mock = MockBackend::new();
    for (qi, strategy, k) in ctx.cells() {
        let q = &ctx.questions[qi];
        let passages = ctx.evidence(q, strategy, k).unwrap();
        let (_, rendered) =
            prompt::build_prompt(strategy, &q.question, &passages, &ctx.instructions, &ctx.template).unwrap();
        if let Some(text) = answers.get(&(q.id.as_str(), strategy)) {
            mock = mock.with_response(rendered.hash, text.clone());
        }
    }
    mock
}
