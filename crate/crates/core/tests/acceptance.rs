//! Acceptance suite. Each criterion runs in isolation and prints one
//! PASS/FAIL line; the process exits non-zero if any fails.

mod common;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pinject::bm25::{Bm25Params, InvertedIndex, TokenizerOptions};
use pinject::corpus::{CorpusStore, Passage};
use pinject::datasets::{Dataset, QuestionRecord, Subset};
use pinject::gateway::{split_reasoning, MockBackend};
use pinject::metrics::{best_over_aliases, normalize_answer};
use pinject::noise::{count_occurrences, make_counterfactual, make_random_noise, NoiseSpec};
use pinject::prompt::{build_prompt, ChatTemplate, InstructionSet, Strategy};
use pinject::rng::SeededRng;
use pinject::runner::{self, RunContext, RunRecord, RESULTS_FILE};

use common::{config, continuation, fixture, fixture_store, script_answers};

fn main() -> ExitCode {
    let criteria: [(&str, fn()); 9] = [
        ("bm25 index matches brute-force oracle", bm25_oracle),
        ("metric fixtures and normalization idempotence", metric_fixtures),
        ("prompt placement properties", prompt_placement),
        ("reasoning split reconstruction", split_reconstruction),
        ("end-to-end mock determinism and resume", end_to_end),
        ("misinformation scenario scoring", misinformation_scenario),
        ("noise guarantees", noise_guarantees),
        ("output length report", length_report),
        ("defaults recorded in provenance", defaults_audit),
    ];
    panic::set_hook(Box::new(|info| eprintln!("  {info}")));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let ok = panic::catch_unwind(AssertUnwindSafe(check)).is_ok();
        let secs = started.elapsed().as_secs_f64();
        println!("criterion {}: {} {name} ({secs:.2}s)", i + 1, if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn read_results(dir: &Path) -> Vec<RunRecord> {
    runner::load_records(&dir.join("out").join(RESULTS_FILE)).unwrap()
}

// ---------------------------------------------------------------- 1

const VOCAB: usize = 300;

fn oracle_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

struct OracleCorpus {
    ids: Vec<String>,
    docs: Vec<HashMap<String, f64>>,
    lengths: Vec<f64>,
    df: HashMap<String, f64>,
}

impl OracleCorpus {
    fn new(docs: &[Passage]) -> Self {
        let mut out = OracleCorpus {
            ids: Vec::new(),
            docs: Vec::new(),
            lengths: Vec::new(),
            df: HashMap::new(),
        };
        for d in docs {
            let toks = oracle_tokens(&format!("{}\n{}", d.title, d.text));
            let mut tf: HashMap<String, f64> = HashMap::new();
            for t in &toks {
                *tf.entry(t.clone()).or_default() += 1.0;
            }
            for t in tf.keys() {
                *out.df.entry(t.clone()).or_default() += 1.0;
            }
            out.ids.push(d.id.clone());
            out.lengths.push(toks.len() as f64);
            out.docs.push(tf);
        }
        out
    }

    /// Scores every document directly from the formula.
    fn rank(&self, query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
        let n = self.ids.len() as f64;
        let avgdl = self.lengths.iter().sum::<f64>() / n;
        let mut q = oracle_tokens(query);
        q.sort();
        let mut out = Vec::new();
        for (i, tfs) in self.docs.iter().enumerate() {
            let mut score = 0.0;
            let mut matched = false;
            for term in &q {
                let Some(&tf) = tfs.get(term) else { continue };
                matched = true;
                let df = self.df[term];
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * self.lengths[i] / avgdl));
            }
            if matched {
                out.push((self.ids[i].clone(), score));
            }
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

fn random_words(rng: &mut SeededRng, n: usize) -> String {
    (0..n)
        .map(|_| {
            // Zipf-ish: small ids are much more frequent.
            let a = rng.below(VOCAB as u64);
            let w = rng.below(a + 1);
            format!("w{w}")
        })
        .collect::<Vec<_>>()
        .join(if rng.below(4) == 0 { ", " } else { " " })
}

fn bm25_oracle() {
    let started = Instant::now();
    let mut rng = SeededRng::new(0xB325);
    let docs: Vec<Passage> = (0..500)
        .map(|i| {
            let title_len = 1 + rng.below(3) as usize;
            let body_len = 10 + rng.below(90) as usize;
            Passage::new(
                format!("d{i:04}"),
                random_words(&mut rng, title_len),
                random_words(&mut rng, body_len),
            )
        })
        .collect();
    let index = InvertedIndex::from_passages(&docs, TokenizerOptions::default()).unwrap();
    let oracle = OracleCorpus::new(&docs);
    let params = Bm25Params::default();
    for _ in 0..100 {
        let len = 1 + rng.below(6) as usize;
        let query = random_words(&mut rng, len);
        let got = index.retrieve(&query, 500, params);
        let want = oracle.rank(&query, 1.2, 0.75);
        let got_ids: Vec<&str> = got.hits.iter().map(|h| h.id.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(got_ids, want_ids, "ordering differs for {query:?}");
        for (h, (_, s)) in got.hits.iter().zip(&want) {
            assert!((h.score - s).abs() <= 1e-9, "{}: {} vs {s}", h.id, h.score);
        }
    }
    assert!(started.elapsed() < Duration::from_secs(10), "took {:?}", started.elapsed());
}

// ---------------------------------------------------------------- 2

fn metric_fixtures() {
    // (prediction, gold aliases, hand-computed F1)
    let cases: &[(&str, &[&str], f64)] = &[
        ("Paris", &["Paris"], 1.0),
        ("the Paris", &["Paris"], 1.0),
        ("PARIS!!!", &["paris"], 1.0),
        ("Paris France", &["Paris"], 2.0 / 3.0),
        ("United States", &["United Kingdom"], 0.5),
        ("kingdom", &["United Kingdom", "UK"], 2.0 / 3.0),
        ("London", &["Paris"], 0.0),
        ("", &["Paris"], 0.0),
        ("  the   the  ", &["Paris"], 0.0),
        ("Guido", &["Guido van Rossum"], 0.5),
        ("van Rossum Guido", &["Guido van Rossum"], 1.0),
        ("1991.", &["1991"], 1.0),
        ("U.S.", &["US"], 1.0),
        ("Amazon", &["Amazon River", "Amazon"], 1.0),
        ("the Amazon river basin", &["Amazon River", "Amazon"], 0.8),
        ("red red blue", &["red blue"], 0.8),
        ("red", &["red red"], 2.0 / 3.0),
        ("An apple a day", &["apple day"], 1.0),
        ("North America", &["South America"], 0.5),
        ("Everest mountain", &["Mount Everest"], 0.5),
        ("language", &["programming language"], 2.0 / 3.0),
        ("one two three four", &["two four six eight"], 0.5),
        ("Belfast, Northern Ireland", &["Belfast"], 0.5),
        ("the US", &["United Kingdom", "UK"], 0.0),
    ];
    assert!(cases.len() >= 20);
    for (pred, gold, want) in cases {
        let got = best_over_aliases(pred, gold).unwrap().f1;
        assert!((got - want).abs() <= 1e-9, "{pred:?} vs {gold:?}: {got} != {want}");
    }

    let palette: Vec<char> = "aAbBzZ09 \t\n.,!?;:'\"()-_/théÉßİ\u{2014}…".chars().collect();
    let words = ["the ", "a ", "an ", "The ", "AN ", "theory ", "anna "];
    let mut rng = SeededRng::new(0x2F1);
    for _ in 0..10_000 {
        let len = rng.below(40) as usize;
        let mut s = String::new();
        for _ in 0..len {
            if rng.below(5) == 0 {
                s.push_str(words[rng.below(words.len() as u64) as usize]);
            } else {
                s.push(palette[rng.below(palette.len() as u64) as usize]);
            }
        }
        let once = normalize_answer(&s);
        assert_eq!(normalize_answer(&once), once, "not idempotent on {s:?}");
    }
}

// ---------------------------------------------------------------- 3

fn prompt_placement() {
    let template = ChatTemplate::qwen3();
    let instructions = InstructionSet::default();
    let mut rng = SeededRng::new(0x3A);
    for case in 0..1000 {
        let strategy = Strategy::ALL[rng.below(4) as usize];
        let question = format!("question{case} about topic{}?", rng.below(1000));
        let n = if strategy == Strategy::DirectQa {
            0
        } else {
            1 + rng.below(5) as usize
        };
        let passages: Vec<Passage> = (0..n)
            .map(|j| Passage::new(format!("p{j}"), format!("title{case}x{j}"), format!("body{case}x{j} text {}", rng.below(99))))
            .collect();
        let (_, rendered) = build_prompt(strategy, &question, &passages, &instructions, &template).unwrap();
        let text = &rendered.text;

        assert_eq!(text.matches(&template.reasoning_open).count(), 1, "case {case}");
        let think = text.find(&template.reasoning_open).unwrap();
        let user_start = text.find(&template.user_open).unwrap() + template.user_open.len();
        let user_end = user_start + text[user_start..].find(&template.user_close).unwrap();
        assert!(user_end < think);

        assert_eq!(text.matches(&question).count(), 1, "case {case}");
        let qpos = text.find(&question).unwrap();
        assert!(user_start <= qpos && qpos < user_end, "question outside user turn");

        for p in &passages {
            assert_eq!(text.matches(&p.text).count(), 1, "case {case}");
            let pos = text.find(&p.text).unwrap();
            match strategy {
                Strategy::PassageInjection => assert!(pos > think, "case {case}: passage before reasoning_open"),
                _ => assert!(user_start <= pos && pos < user_end, "case {case}: passage outside user turn"),
            }
        }
    }
}

// ---------------------------------------------------------------- 4

fn split_reconstruction() {
    const CLOSE: &str = "</think>";
    let palette: Vec<char> = "ab <>/thinké\n你".chars().collect();
    let mut rng = SeededRng::new(0x4B);
    let mut with_markers = 0;
    for _ in 0..10_000 {
        let markers = rng.below(4) as usize;
        let mut text = String::new();
        for m in 0..=markers {
            for _ in 0..rng.below(12) {
                text.push(palette[rng.below(palette.len() as u64) as usize]);
            }
            if m < markers {
                text.push_str(CLOSE);
            }
        }
        let s = split_reasoning(&text, CLOSE);
        assert_eq!(s.terminated, text.contains(CLOSE));
        if s.terminated {
            with_markers += 1;
            assert_eq!(format!("{}{CLOSE}{}", s.reasoning, s.answer), text);
            assert!(!s.reasoning.contains(CLOSE));
        } else {
            assert_eq!((s.reasoning, s.answer), (text.as_str(), ""));
        }
    }
    assert!(with_markers > 5000);
}

// ---------------------------------------------------------------- 5

/// Scripted answers per strategy, in question order q01..q12.
const SCRIPTED: [(Strategy, [&str; 12]); 4] = [
    (
        Strategy::DirectQa,
        ["Kingdom", "Belfast", "Lyon", "Paris", "K2", "Alps", "Guido", "1991", "Nile", "Africa", "India", "language"],
    ),
    (
        Strategy::VanillaRag,
        [
            "United States",
            "Belfast",
            "Paris",
            "Paris",
            "Everest",
            "Himalayas",
            "Guido van Rossum",
            "1989",
            "Amazon",
            "South America",
            "Nepal",
            "a programming language",
        ],
    ),
    (
        Strategy::InstructionInjection,
        [
            "UK",
            "Belfast",
            "Paris",
            "Paris",
            "Mount Everest",
            "the Himalayas",
            "Guido van Rossum",
            "1991",
            "the Amazon River basin",
            "South America",
            "Tibet",
            "programming language",
        ],
    ),
    (
        Strategy::PassageInjection,
        [
            "United Kingdom",
            "Belfast",
            "Paris",
            "Paris",
            "Mount Everest",
            "Himalayas",
            "Rossum",
            "1991",
            "Amazon River",
            "South America",
            "China",
            "programming language",
        ],
    ),
];

/// Pooled means worked out by hand from the table above.
fn expected_micro(strategy: Strategy) -> f64 {
    match strategy {
        // 2/3 + 1 + 1 + 1/2 + 1 + 2/3 = 29/6, over 12
        Strategy::DirectQa => (29.0 / 6.0) / 12.0,
        // 1/2 + eight 1s (q08 and q11 wrong)
        Strategy::VanillaRag => 9.5 / 12.0,
        // ten 1s, q09 = 0.8, q11 = 0
        Strategy::InstructionInjection => 10.8 / 12.0,
        // eleven 1s, q07 = 1/2
        Strategy::PassageInjection => 11.5 / 12.0,
    }
}

fn end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture_store(dir);
    let cfg = config(
        dir,
        &fixture("questions.jsonl"),
        "retrieved",
        &Strategy::ALL,
        "k_values = [3]\nseed = 11\nconcurrency = 3",
    );
    let ctx = RunContext::prepare(cfg).unwrap();
    let mut answers = HashMap::new();
    for (strategy, row) in SCRIPTED {
        for (i, a) in row.iter().enumerate() {
            let qid: &str = ctx.questions[i].id.as_str();
            answers.insert((qid, strategy), continuation("Weighing the evidence.", a));
        }
    }
    let mock = script_answers(&ctx, &answers);

    let first = runner::run_with_backend(&ctx, &mock).unwrap();
    assert_eq!((first.added, first.errors), (48, 0));
    let records = read_results(dir);
    assert_eq!(records.len(), 48);
    assert!(runner::duplicate_keys(&records).is_empty());

    for strategy in Strategy::ALL {
        let mine: Vec<f64> = records.iter().filter(|r| r.strategy == strategy).map(|r| r.score.f1).collect();
        assert_eq!(mine.len(), 12);
        let got = pinject::metrics::micro_average(&mine).unwrap();
        assert!((got - expected_micro(strategy)).abs() <= 1e-9, "{strategy}: {got}");
        let report = runner::build_report(&records).unwrap();
        let row = report.f1_tables[0].rows.iter().find(|r| r.strategy == strategy).unwrap();
        assert!((row.micro_average - expected_micro(strategy)).abs() <= 1e-9);
    }

    let again = runner::run_with_backend(&ctx, &mock).unwrap();
    assert_eq!((again.added, again.skipped), (0, 48));
    assert_eq!(read_results(dir).len(), 48);

    let path = dir.join("out").join(RESULTS_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let drop: BTreeSet<usize> = (0..10).map(|i| i * 4 + 1).collect();
    let kept: String = lines
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    fs::write(&path, kept).unwrap();
    let removed: Vec<RunRecord> = drop.iter().map(|&i| serde_json::from_str(lines[i]).unwrap()).collect();

    let resumed = runner::run_with_backend(&ctx, &mock).unwrap();
    assert_eq!(resumed.added, 10);
    let after = read_results(dir);
    assert_eq!(after.len(), 48);
    let restored = &after[38..];
    let key = |r: &RunRecord| (r.question_id.clone(), r.strategy, r.k);
    let want: BTreeSet<_> = removed.iter().map(key).collect();
    let got: BTreeSet<_> = restored.iter().map(key).collect();
    assert_eq!(got, want);
    for r in restored {
        let old = removed.iter().find(|o| key(o) == key(r)).unwrap();
        assert_eq!(
            (&r.prompt_hash, &r.passage_ids, &r.outcome.full_text, &r.extracted_answer, r.score),
            (&old.prompt_hash, &old.passage_ids, &old.outcome.full_text, &old.extracted_answer, old.score)
        );
    }
}

// ---------------------------------------------------------------- 6

fn misinformation_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture_store(dir);
    let cfg = config(
        dir,
        &fixture("counterfactual.jsonl"),
        "counterfactual",
        &[Strategy::VanillaRag, Strategy::PassageInjection],
        "",
    );
    let ctx = RunContext::prepare(cfg).unwrap();
    let mut answers = HashMap::new();
    answers.insert(
        ("cf-ni", Strategy::PassageInjection),
        continuation(
            "The passage claims Northern Ireland is part of the United States. That contradicts what I know: it is a constituent country of the United Kingdom, so the passage is wrong.",
            "United Kingdom",
        ),
    );
    answers.insert(
        ("cf-ni", Strategy::VanillaRag),
        continuation("The passage says Northern Ireland is part of the United States.", "the US"),
    );
    let mock = script_answers(&ctx, &answers);
    let summary = runner::run_with_backend(&ctx, &mock).unwrap();
    assert_eq!((summary.added, summary.errors), (2, 0));
    let records = read_results(dir);
    let f1 = |s: Strategy| records.iter().find(|r| r.strategy == s).unwrap().score.f1;
    assert_eq!(f1(Strategy::PassageInjection), 1.0);
    assert_eq!(f1(Strategy::VanillaRag), 0.0);
    let pi = records.iter().find(|r| r.strategy == Strategy::PassageInjection).unwrap();
    assert_eq!(pi.passage_ids, ["ni#cf"]);
}

// ---------------------------------------------------------------- 7

fn noise_guarantees() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus_path = tmp.path().join("corpus.jsonl");
    let mut rng = SeededRng::new(0x7C);
    let mut text = String::new();
    for i in 0..60 {
        let p = Passage::new(format!("doc{i}"), format!("Title {i}"), random_words(&mut rng, 12));
        text.push_str(&serde_json::to_string(&p).unwrap());
        text.push('\n');
    }
    fs::write(&corpus_path, text).unwrap();
    let store_dir = tmp.path().join("store");
    CorpusStore::ingest(&corpus_path, &store_dir).unwrap();
    let store = CorpusStore::open(&store_dir).unwrap();

    for draw in 0..1000u64 {
        let gold: Vec<String> = (0..1 + rng.below(5)).map(|_| format!("doc{}", rng.below(60))).collect();
        let record = QuestionRecord {
            id: format!("n{draw}"),
            dataset: Dataset::Fixture,
            subset: Subset::None,
            question: "q?".into(),
            gold_answers: vec!["a".into()],
            gold_passage_ids: gold.clone(),
            attached_context: None,
        };
        let spec = NoiseSpec::random(draw * 7919);
        let a = make_random_noise(&record, &store, spec).unwrap();
        let b = make_random_noise(&record, &store, spec).unwrap();
        assert_eq!(a, b, "draw {draw} does not replay");
        assert_eq!(a.len(), 3);
        let ids: HashSet<&str> = a.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids.len(), 3, "duplicate passage in draw {draw}");
        assert!(gold.iter().all(|g| !ids.contains(g.as_str())), "draw {draw} hit gold");
    }

    let forms = ["United Kingdom", "united kingdom", "UNITED KINGDOM", "United kingdom"];
    let distractors = ["United States", "France", "Canada", "Norway"];
    for i in 0..100 {
        let mut body = random_words(&mut rng, 8);
        for _ in 0..1 + rng.below(4) {
            body.push_str(&format!(" {} {}", forms[rng.below(4) as usize], random_words(&mut rng, 3)));
        }
        let p = Passage::new(format!("p{i}"), "Northern Ireland and the United Kingdom", body);
        let cf = make_counterfactual(&p, "United Kingdom", distractors[i % 4]).unwrap();
        for field in [&cf.title, &cf.text] {
            assert_eq!(field.to_lowercase().matches("united kingdom").count(), 0, "{field}");
            assert_eq!(count_occurrences(field, "United Kingdom"), 0);
        }
    }
}

// ---------------------------------------------------------------- 8

fn length_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture_store(dir);
    let questions: Vec<String> = fs::read_to_string(fixture("questions.jsonl"))
        .unwrap()
        .lines()
        .take(2)
        .map(str::to_string)
        .collect();
    let dataset = dir.join("two.jsonl");
    fs::write(&dataset, questions.join("\n")).unwrap();
    let cfg = config(dir, &dataset, "gold", &[Strategy::DirectQa], "");
    let ctx = RunContext::prepare(cfg).unwrap();
    let mut answers = HashMap::new();
    let body = |n: usize| {
        let tail = "\n</think>\n\nAnswer: x";
        format!("{}{tail}", "r".repeat(n - tail.chars().count()))
    };
    answers.insert(("q01", Strategy::DirectQa), body(1000));
    answers.insert(("q02", Strategy::DirectQa), body(2000));
    let mock = script_answers(&ctx, &answers);
    runner::run_with_backend(&ctx, &mock).unwrap();

    let records = read_results(dir);
    let mut lens: Vec<usize> = records.iter().map(|r| r.outcome.char_len).collect();
    lens.sort();
    assert_eq!(lens, [1000, 2000]);
    let table = runner::length_table(&records);
    assert_eq!(table.len(), 1);
    assert_eq!(table[0].mean_chars, 1500.0);
    assert_eq!(table[0].n, 2);
    let rendered = runner::build_report(&records).unwrap().render();
    assert!(rendered.contains("1500.0"), "{rendered}");
}

// ---------------------------------------------------------------- 9

fn defaults_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture_store(dir);
    let cfg = config(
        dir,
        &fixture("questions.jsonl"),
        "random_noise",
        &[Strategy::PassageInjection],
        "",
    );
    let ctx = RunContext::prepare(cfg).unwrap();
    let mock = MockBackend::new().with_fallback(continuation("...", "Paris"));
    runner::run_with_backend(&ctx, &mock).unwrap();
    let records = read_results(dir);
    assert_eq!(records.len(), 12);
    for r in &records {
        let p = &r.provenance;
        assert_eq!((p.temperature, p.top_p), (0.6, 0.95));
        assert_eq!((p.k1, p.b), (1.2, 0.75));
        assert_eq!(p.noise_n, 3);
        assert_eq!(r.passage_ids.len(), 3);
    }
    let raw = fs::read_to_string(dir.join("out").join(RESULTS_FILE)).unwrap();
    let first: serde_json::Value = serde_json::from_str(raw.lines().next().unwrap()).unwrap();
    let prov = &first["provenance"];
    assert_eq!(prov["temperature"], 0.6);
    assert_eq!(prov["top_p"], 0.95);
    assert_eq!(prov["k1"], 1.2);
    assert_eq!(prov["b"], 0.75);
    assert_eq!(prov["noise_n"], 3);
}
