use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pinject::bm25::{Bm25Params, InvertedIndex, TokenizerOptions};
use pinject::corpus::{CorpusStore, DumpConverter, TsvDumpConverter};
use pinject::datasets::{self, Dataset, DatasetError, DatasetManifest};
use pinject::noise::{counterfactual_context, make_random_noise, DistractorPool, NoiseSpec, DEFAULT_RANDOM_PASSAGES};
use pinject::rng::{derive_seed, SAMPLER_VERSION};
use pinject::runner::{self, ExperimentConfig};

/// Passage-injection RAG evaluation harness.
#[derive(Parser)]
#[command(name = "pinject", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and convert passage stores.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Build the BM25 index of a store.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Print the top-k passages for a query as `id<TAB>score`.
    Retrieve(RetrieveArgs),
    /// Check normalized dataset files.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Construct noisy evidence sets.
    #[command(subcommand)]
    Noise(NoiseCmd),
    /// Run an experiment config; resumes when results already exist.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize a results file.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
    },
    /// Recompute prompt hashes for a sample of records.
    Verify {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 20)]
        sample: usize,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Ingest a JSON-lines corpus (`id`, `title`, `text`) into a store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Convert a TSV passage dump (`id`, `text`, `title` header) to JSON lines.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum IndexCmd {
    Build {
        #[arg(long)]
        store: PathBuf,
        /// Drop English stopwords from documents and queries.
        #[arg(long)]
        stopwords: bool,
        /// Apply the Snowball English stemmer.
        #[arg(long)]
        stem: bool,
    },
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
}

#[derive(Subcommand)]
enum DatasetCmd {
    Validate {
        #[arg(long)]
        input: PathBuf,
        /// Require every record to carry this dataset label.
        #[arg(long)]
        dataset: Option<String>,
        /// Resolve gold passage ids against this store.
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum NoiseCmd {
    /// Sample `n` non-gold passages per question.
    Random {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RANDOM_PASSAGES)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite gold passages with a distractor entity; writes a dataset
    /// whose records carry the rewritten passages as attached context.
    Counterfactual {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        distractors: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Records,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Corpus(CorpusCmd::Ingest { input, store }) => {
            let report = CorpusStore::ingest(&input, &store)?;
            for m in &report.malformed {
                eprintln!("line {}: {}", m.line, m.reason);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "ingested {} passages ({} malformed lines skipped), digest {}",
                report.handle.doc_count,
                report.malformed.len(),
                report.handle.source_digest
            );
        }
        Command::Corpus(CorpusCmd::Convert { input, output }) => {
            let mut reader = BufReader::new(File::open(&input).with_context(|| format!("opening {}", input.display()))?);
            let mut writer = BufWriter::new(File::create(&output)?);
            let n = TsvDumpConverter.convert(&mut reader, &mut writer)?;
            writer.flush()?;
            println!("wrote {n} passages to {}", output.display());
        }
        Command::Index(IndexCmd::Build { store, stopwords, stem }) => {
            let corpus = CorpusStore::open(&store)?;
            let opts = TokenizerOptions {
                remove_stopwords: stopwords,
                stem,
            };
            let index = InvertedIndex::build(&corpus, opts)?;
            let path = index.save(&store)?;
            println!(
                "indexed {} passages, {} terms, avg length {:.2} -> {}",
                index.doc_count(),
                index.term_count(),
                index.avg_doc_len(),
                path.display()
            );
        }
        Command::Retrieve(a) => {
            let params = Bm25Params::new(a.k1, a.b)?;
            let corpus = CorpusStore::open(&a.store)?;
            let index = InvertedIndex::load(&corpus)?;
            let result = index.retrieve(&a.query, a.k, params);
            if result.empty_query {
                eprintln!("warning: query has no indexable terms");
            }
            let mut out = io::stdout().lock();
            for hit in &result.hits {
                writeln!(out, "{}\t{:.6}", hit.id, hit.score)?;
            }
        }
        Command::Dataset(DatasetCmd::Validate { input, dataset, store }) => return validate_dataset(&input, dataset, store),
        Command::Noise(NoiseCmd::Random {
            dataset,
            store,
            n,
            seed,
            out,
        }) => {
            let records = datasets::load_any(&dataset)?;
            let corpus = CorpusStore::open(&store)?;
            let mut w = BufWriter::new(File::create(&out)?);
            for r in &records {
                let record_seed = derive_seed(seed, &r.id);
                let passages = make_random_noise(r, &corpus, NoiseSpec::random(record_seed).with_n(n))
                    .with_context(|| format!("question {}", r.id))?;
                let line = json!({
                    "question_id": r.id,
                    "kind": "random",
                    "base_seed": seed,
                    "seed": record_seed,
                    "sampler": SAMPLER_VERSION,
                    "passages": passages,
                });
                writeln!(w, "{line}")?;
            }
            w.flush()?;
            println!("wrote {} noise sets to {}", records.len(), out.display());
        }
        Command::Noise(NoiseCmd::Counterfactual {
            dataset,
            store,
            distractors,
            seed,
            out,
        }) => {
            let records = datasets::load_any(&dataset)?;
            let corpus = store.as_deref().map(CorpusStore::open).transpose()?;
            let pool = DistractorPool::load(&distractors)?;
            let mut kept = Vec::new();
            let mut failed = 0;
            for r in records {
                match counterfactual_context(&r, corpus.as_ref(), &pool, seed) {
                    Ok(passages) => {
                        let mut cf = r;
                        cf.attached_context = Some(passages);
                        kept.push(cf);
                    }
                    Err(e) => {
                        eprintln!("skipped: {e}");
                        failed += 1;
                    }
                }
            }
            datasets::write_records(&kept, BufWriter::new(File::create(&out)?))?;
            println!(
                "wrote {} counterfactual records to {} ({failed} skipped)",
                kept.len(),
                out.display()
            );
        }
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let out = config.output_dir.clone();
            let summary = runner::run_matrix(config)?;
            println!(
                "{} cells planned, {} already present, {} added ({} errors) -> {}",
                summary.planned,
                summary.skipped,
                summary.added,
                summary.errors,
                out.join(runner::RESULTS_FILE).display()
            );
        }
        Command::Report { results, format } => {
            let records = runner::load_records(&results)?;
            let report = runner::build_report(&records)?;
            let dir = results.parent().unwrap_or(Path::new("."));
            report.write_records(dir)?;
            match format {
                ReportFormat::Table => print!("{}", report.render()),
                ReportFormat::Records => {
                    let mut out = io::stdout().lock();
                    for cell in report.f1_records().iter().chain(&report.length_records()) {
                        writeln!(out, "{}", serde_json::to_string(cell)?)?;
                    }
                }
            }
        }
        Command::Verify { results, sample } => {
            let report = runner::verify_results(&results, sample)?;
            for m in &report.mismatches {
                eprintln!("mismatch: {m}");
            }
            println!(
                "verified {} records ({} error cells skipped), {} mismatches",
                report.checked,
                report.skipped,
                report.mismatches.len()
            );
            if !report.ok() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn validate_dataset(input: &Path, dataset: Option<String>, store: Option<PathBuf>) -> Result<ExitCode> {
    let label: Option<Dataset> = dataset.map(|d| d.parse()).transpose().map_err(anyhow::Error::msg)?;
    let records = match label {
        Some(Dataset::ConfiQa) => datasets::load_confiqa(input)?,
        Some(d) => datasets::load_dataset(input, d)?,
        None => datasets::load_any(input)?,
    };
    if records.is_empty() {
        bail!("{} holds no records", input.display());
    }
    let corpus = store.as_deref().map(CorpusStore::open).transpose()?;
    let mut problems = 0;
    for r in &records {
        match datasets::gold_passages(r, corpus.as_ref()) {
            Ok(gold) => gold.warnings.iter().for_each(|w| eprintln!("warning: {w}")),
            Err(DatasetError::MissingGold { .. }) if corpus.is_none() => {}
            Err(e) => {
                eprintln!("error: {e}");
                problems += 1;
            }
        }
    }
    let manifest = DatasetManifest::of(records[0].dataset, input, &records);
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    if problems > 0 {
        eprintln!("{problems} record(s) with unresolvable gold evidence");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
