//! Normalized QA records and their loaders.
//!
//! Every dataset (2WikiMultiHopQA, HotpotQA, CWQ, PopQA, ConFiQA and the
//! bundled fixture) is consumed in one line-delimited JSON schema:
//!
//! ```json
//! {"id":"q1","dataset":"hotpotqa","subset":"bridge","question":"…",
//!  "gold_answers":["…"],"gold_passage_ids":["p1"],"attached_context":[{"id":…,"title":…,"text":…}]}
//! ```
//!
//! `attached_context` is optional. Field order on output is the order
//! above, so `write_records(load_dataset(f))` reproduces a normalized file.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusStore, Passage};
use crate::metrics::normalize_answer;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("dataset file {0} is empty")]
    Empty(PathBuf),
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("{message} at line {line}")]
    Invalid { line: usize, message: String },
    #[error("no gold evidence for question {0}")]
    NoGoldEvidence(String),
    #[error("question {question}: gold passages not found: {}", missing.join(", "))]
    MissingGold {
        question: String,
        missing: Vec<String>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "2wiki")]
    TwoWiki,
    #[serde(rename = "hotpotqa")]
    HotpotQa,
    #[serde(rename = "cwq")]
    Cwq,
    #[serde(rename = "popqa")]
    PopQa,
    #[serde(rename = "confiqa")]
    ConfiQa,
    #[serde(rename = "fixture")]
    Fixture,
}

impl Dataset {
    pub const ALL: [Dataset; 6] = [
        Dataset::TwoWiki,
        Dataset::HotpotQa,
        Dataset::Cwq,
        Dataset::PopQa,
        Dataset::ConfiQa,
        Dataset::Fixture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::TwoWiki => "2wiki",
            Dataset::HotpotQa => "hotpotqa",
            Dataset::Cwq => "cwq",
            Dataset::PopQa => "popqa",
            Dataset::ConfiQa => "confiqa",
            Dataset::Fixture => "fixture",
        }
    }

    pub fn allowed_subsets(self) -> &'static [Subset] {
        match self {
            Dataset::TwoWiki => &[
                Subset::None,
                Subset::Bridge,
                Subset::Comparison,
                Subset::Compose,
                Subset::Inference,
            ],
            Dataset::HotpotQa => &[Subset::None, Subset::Bridge, Subset::Comparison],
            _ => &[Subset::None],
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Dataset::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown dataset {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Bridge,
    Comparison,
    Compose,
    Inference,
    None,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Bridge => "bridge",
            Subset::Comparison => "comparison",
            Subset::Compose => "compose",
            Subset::Inference => "inference",
            Subset::None => "none",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionRecord {
    pub id: String,
    pub dataset: Dataset,
    pub subset: Subset,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub gold_passage_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached_context: Option<Vec<Passage>>,
}

impl QuestionRecord {
    /// Checks record invariants; the error message is completed with the
    /// line number by the loader.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id empty".into());
        }
        if self.question.trim().is_empty() {
            return Err("question empty".into());
        }
        if self.gold_answers.is_empty() {
            return Err("gold_answers empty".into());
        }
        if let Some(i) = self.gold_answers.iter().position(|a| a.trim().is_empty()) {
            return Err(format!("gold_answers[{i}] blank"));
        }
        if !self.dataset.allowed_subsets().contains(&self.subset) {
            return Err(format!(
                "subset {:?} is not allowed for dataset {}",
                self.subset.as_str(),
                self.dataset
            ));
        }
        if let Some(ctx) = &self.attached_context {
            for (i, p) in ctx.iter().enumerate() {
                p.validate().map_err(|e| format!("attached_context[{i}]: {e}"))?;
            }
        }
        Ok(())
    }

    pub fn attached(&self) -> &[Passage] {
        self.attached_context.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: Dataset,
    pub path: PathBuf,
    pub count: usize,
    pub subset_counts: BTreeMap<Subset, usize>,
}

impl DatasetManifest {
    pub fn of(dataset: Dataset, path: &Path, records: &[QuestionRecord]) -> Self {
        let mut subset_counts = BTreeMap::new();
        for r in records {
            *subset_counts.entry(r.subset).or_insert(0) += 1;
        }
        Self {
            dataset,
            path: path.to_path_buf(),
            count: records.len(),
            subset_counts,
        }
    }
}

/// Parses and validates a normalized dataset file. `dataset` must match
/// the `dataset` field of every record.
pub fn load_dataset(path: &Path, dataset: Dataset) -> Result<Vec<QuestionRecord>> {
    let records = parse_records(path)?;
    for (line, r) in &records {
        if r.dataset != dataset {
            return Err(DatasetError::Invalid {
                line: *line,
                message: format!("record is labelled {} but {} was expected", r.dataset, dataset),
            });
        }
    }
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

/// Loads a file without constraining the dataset label.
pub fn load_any(path: &Path) -> Result<Vec<QuestionRecord>> {
    Ok(parse_records(path)?.into_iter().map(|(_, r)| r).collect())
}

/// ConFiQA records must carry their misleading context inline; their gold
/// answers are the true answers.
pub fn load_confiqa(path: &Path) -> Result<Vec<QuestionRecord>> {
    let records = parse_records(path)?;
    for (line, r) in &records {
        if r.attached().is_empty() {
            return Err(DatasetError::Invalid {
                line: *line,
                message: format!("record {} has no attached_context", r.id),
            });
        }
    }
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

fn parse_records(path: &Path) -> Result<Vec<(usize, QuestionRecord)>> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(line);
        let record: QuestionRecord = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            DatasetError::Schema {
                line: line_no,
                field: if field == "." { "<record>".into() } else { field },
                message: e.into_inner().to_string(),
            }
        })?;
        record.validate().map_err(|message| DatasetError::Invalid {
            line: line_no,
            message,
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::Invalid {
                line: line_no,
                message: format!("duplicate question id {:?}", record.id),
            });
        }
        out.push((line_no, record));
    }
    if out.is_empty() {
        return Err(DatasetError::Empty(path.to_path_buf()));
    }
    Ok(out)
}

pub fn write_records<W: Write>(records: &[QuestionRecord], mut w: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, Clone)]
pub struct GoldEvidence {
    pub passages: Vec<Passage>,
    pub warnings: Vec<String>,
}

/// Resolves the gold passages of `record`, sorted by id.
///
/// Ids are looked up in `attached_context` first, then in `corpus`. A
/// record with no gold ids falls back to its attached context.
pub fn gold_passages(record: &QuestionRecord, corpus: Option<&CorpusStore>) -> Result<GoldEvidence> {
    let mut passages = Vec::new();
    if record.gold_passage_ids.is_empty() {
        if record.attached().is_empty() {
            return Err(DatasetError::NoGoldEvidence(record.id.clone()));
        }
        passages.extend(record.attached().iter().cloned());
    } else {
        let mut missing = Vec::new();
        for id in &record.gold_passage_ids {
            if let Some(p) = record.attached().iter().find(|p| &p.id == id) {
                passages.push(p.clone());
                continue;
            }
            match corpus.map(|c| c.get_passage(id)) {
                Some(Ok(p)) => passages.push(p),
                Some(Err(CorpusError::NotFound(_))) | None => missing.push(id.clone()),
                Some(Err(e)) => return Err(e.into()),
            }
        }
        if !missing.is_empty() {
            return Err(DatasetError::MissingGold {
                question: record.id.clone(),
                missing,
            });
        }
    }
    passages.sort_by(|a, b| a.id.cmp(&b.id));
    passages.dedup_by(|a, b| a.id == b.id);

    let mut warnings = Vec::new();
    if !passages.iter().any(|p| contains_any_answer(p, &record.gold_answers)) {
        warnings.push(format!("question {}: gold passage lacks answer string", record.id));
    }
    Ok(GoldEvidence { passages, warnings })
}

/// Whether any alias occurs in the passage title or text, compared on
/// normalized token boundaries.
pub fn contains_any_answer(p: &Passage, answers: &[String]) -> bool {
    let hay = format!(" {} ", normalize_answer(&format!("{}\n{}", p.title, p.text)));
    answers.iter().any(|a| {
        let needle = normalize_answer(a);
        !needle.is_empty() && hay.contains(&format!(" {needle} "))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::NamedTempFile;

    fn file(lines: &[&str]) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const Q1: &str = r#"{"id":"q1","dataset":"hotpotqa","subset":"bridge","question":"Who?","gold_answers":["Ann"],"gold_passage_ids":["p1"]}"#;
    const Q2: &str = r#"{"id":"q2","dataset":"hotpotqa","subset":"comparison","question":"Which?","gold_answers":["A","B"],"gold_passage_ids":[]}"#;

    #[test]
    fn loads_in_file_order() {
        let f = file(&[Q1, Q2]);
        let recs = load_dataset(f.path(), Dataset::HotpotQa).unwrap();
        assert_eq!(recs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["q1", "q2"]);
    }

    #[test]
    fn empty_gold_answers_rejected_with_line() {
        let bad = r#"{"id":"q3","dataset":"popqa","subset":"none","question":"x","gold_answers":[],"gold_passage_ids":[]}"#;
        let f = file(&[r#"{"id":"q0","dataset":"popqa","subset":"none","question":"y","gold_answers":["z"],"gold_passage_ids":[]}"#, bad]);
        let err = load_dataset(f.path(), Dataset::PopQa).unwrap_err();
        assert_eq!(err.to_string(), "gold_answers empty at line 2");
    }

    #[test]
    fn illegal_subset_named() {
        let bad = r#"{"id":"q","dataset":"hotpotqa","subset":"compose","question":"x","gold_answers":["a"],"gold_passage_ids":[]}"#;
        let err = load_dataset(file(&[bad]).path(), Dataset::HotpotQa).unwrap_err();
        assert!(err.to_string().contains("\"compose\""), "{err}");
        let bad = r#"{"id":"q","dataset":"popqa","subset":"bridge","question":"x","gold_answers":["a"],"gold_passage_ids":[]}"#;
        assert!(load_dataset(file(&[bad]).path(), Dataset::PopQa).is_err());
    }

    #[test]
    fn schema_errors_name_field() {
        let bad = r#"{"id":"q","dataset":"hotpotqa","subset":"bridge","question":"x","gold_answers":"a","gold_passage_ids":[]}"#;
        match load_dataset(file(&[bad]).path(), Dataset::HotpotQa).unwrap_err() {
            DatasetError::Schema { line, field, .. } => {
                assert_eq!(line, 1);
                assert_eq!(field, "gold_answers");
            }
            e => panic!("unexpected {e}"),
        }
        let missing = r#"{"id":"q","dataset":"hotpotqa","subset":"bridge","question":"x","gold_passage_ids":[]}"#;
        let err = load_dataset(file(&[missing]).path(), Dataset::HotpotQa).unwrap_err();
        assert!(err.to_string().contains("gold_answers"), "{err}");
    }

    #[test]
    fn empty_file_is_error() {
        assert!(matches!(
            load_dataset(file(&[]).path(), Dataset::Cwq),
            Err(DatasetError::Empty(_))
        ));
    }

    #[test]
    fn dataset_label_must_match() {
        assert!(load_dataset(file(&[Q1]).path(), Dataset::TwoWiki).is_err());
    }

    #[test]
    fn confiqa_misinformation_case() {
        let rec = r#"{"id":"cf1","dataset":"confiqa","subset":"none","question":"Which country is Northern Ireland part of?","gold_answers":["United Kingdom"],"gold_passage_ids":[],"attached_context":[{"id":"ni#cf","title":"Northern Ireland","text":"Northern Ireland is part of the United States."}]}"#;
        let recs = load_confiqa(file(&[rec]).path()).unwrap();
        assert_eq!(recs[0].attached().len(), 1);
        assert!(!recs[0].attached()[0].text.contains(&recs[0].gold_answers[0]));
    }

    #[test]
    fn confiqa_requires_context() {
        let rec = r#"{"id":"cf1","dataset":"confiqa","subset":"none","question":"q","gold_answers":["a"],"gold_passage_ids":[]}"#;
        assert!(load_confiqa(file(&[rec]).path()).is_err());
        let empty_text = r#"{"id":"cf1","dataset":"confiqa","subset":"none","question":"q","gold_answers":["a"],"gold_passage_ids":[],"attached_context":[{"id":"x","title":"","text":""}]}"#;
        assert!(load_confiqa(file(&[empty_text]).path()).is_err());
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let ctx = r#"{"id":"c","dataset":"confiqa","subset":"none","question":"q","gold_answers":["a"],"gold_passage_ids":[],"attached_context":[{"id":"x","title":"t","text":"y"}]}"#;
        let f = file(&[Q1, Q2, ctx]);
        let recs = load_any(f.path()).unwrap();
        let mut out = Vec::new();
        write_records(&recs, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), fs::read_to_string(f.path()).unwrap());
    }

    fn record(ids: &[&str], attached: Option<Vec<Passage>>) -> QuestionRecord {
        QuestionRecord {
            id: "q".into(),
            dataset: Dataset::Fixture,
            subset: Subset::None,
            question: "Where?".into(),
            gold_answers: vec!["Belfast".into()],
            gold_passage_ids: ids.iter().map(|s| s.to_string()).collect(),
            attached_context: attached,
        }
    }

    #[test]
    fn gold_lookup_sorted_by_id() {
        let attached = vec![
            Passage::new("p2", "", "Belfast is a city."),
            Passage::new("p1", "", "Something else."),
        ];
        let ev = gold_passages(&record(&["p2", "p1"], Some(attached)), None).unwrap();
        assert_eq!(ev.passages.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["p1", "p2"]);
        assert!(ev.warnings.is_empty());
    }

    #[test]
    fn no_gold_evidence() {
        assert!(matches!(
            gold_passages(&record(&[], None), None),
            Err(DatasetError::NoGoldEvidence(_))
        ));
    }

    #[test]
    fn missing_ids_listed() {
        match gold_passages(&record(&["a", "b"], None), None) {
            Err(DatasetError::MissingGold { missing, .. }) => assert_eq!(missing, ["a", "b"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn warns_when_answer_absent() {
        let ev = gold_passages(&record(&["p"], Some(vec![Passage::new("p", "", "Nothing here.")])), None).unwrap();
        assert_eq!(ev.warnings, ["question q: gold passage lacks answer string"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_line() -> impl Strategy<Value = String> {
            let ds = proptest::sample::select(vec!["2wiki", "hotpotqa", "cwq", "popqa", "confiqa", "fixture", "bogus"]);
            let sub = proptest::sample::select(vec!["bridge", "comparison", "compose", "inference", "none", "x"]);
            let ans = proptest::collection::vec(proptest::sample::select(vec!["", " ", "a", "Paris"]), 0..3);
            (ds, sub, "[a-z ]{0,6}", ans, any::<bool>()).prop_map(|(d, s, q, a, drop_field)| {
                let mut v = serde_json::json!({"id": "q", "dataset": d, "subset": s, "question": q,
                                               "gold_answers": a, "gold_passage_ids": []});
                if drop_field {
                    v.as_object_mut().unwrap().remove("subset");
                }
                v.to_string()
            })
        }

        proptest! {
            #[test]
            fn loaded_records_satisfy_invariants(lines in proptest::collection::vec(any_line(), 1..6)) {
                let lines: Vec<String> = lines.into_iter().enumerate()
                    .map(|(i, l)| l.replacen("\"id\":\"q\"", &format!("\"id\":\"q{i}\""), 1)).collect();
                let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
                let f = file(&refs);
                if let Ok(recs) = load_any(f.path()) {
                    for r in recs {
                        prop_assert!(r.validate().is_ok());
                        prop_assert!(!r.gold_answers.is_empty());
                        prop_assert!(r.gold_answers.iter().all(|a| !a.trim().is_empty()));
                    }
                }
            }
        }
    }
}
