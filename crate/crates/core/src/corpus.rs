//! Passage corpus: ingestion into an on-disk store, id lookup, and seeded
//! sampling.
//!
//! Input is line-delimited JSON, one `{"id", "title", "text"}` object per
//! line. Ingestion writes a store directory:
//!
//! ```text
//! <store>/passages.jsonl   one canonical record per line, ordinal order
//! <store>/offsets.bin      u64 LE byte offsets, doc_count + 1 entries
//! <store>/manifest.json    doc_count, source digest, sampler version
//! ```
//!
//! The manifest is written last, so a store without one is incomplete.
//! Passage bodies stay on disk and are read with positional reads, which
//! lets any number of threads share one [`CorpusStore`].

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{SeededRng, SAMPLER_VERSION};

const PASSAGES_FILE: &str = "passages.jsonl";
const OFFSETS_FILE: &str = "offsets.bin";
const MANIFEST_FILE: &str = "manifest.json";
const STORE_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus file {path}: {source}")]
    Unreadable { path: PathBuf, source: io::Error },
    #[error("duplicate passage id {id:?} at line {line} (first seen at line {first_line})")]
    DuplicateId {
        id: String,
        line: usize,
        first_line: usize,
    },
    #[error("passage not found: {0}")]
    NotFound(String),
    #[error("cannot sample {requested} passages: only {available} available after exclusion")]
    Capacity { requested: usize, available: usize },
    #[error("corpus store at {0} is missing or incomplete")]
    MissingStore(PathBuf),
    #[error("corpus store is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// One corpus document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// Checks the record-level invariants: non-empty id and text.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("id is empty".into());
        }
        if self.text.is_empty() {
            return Err(format!("text is empty for passage {:?}", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusHandle {
    pub doc_count: usize,
    /// SHA-256 of the ingested file's bytes.
    pub source_digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreManifest {
    format: u32,
    doc_count: usize,
    source_digest: String,
    sampler: String,
}

#[derive(Debug, Clone)]
pub struct MalformedLine {
    pub line: usize,
    pub reason: String,
}

/// Result of [`CorpusStore::ingest`]: the handle plus anything the caller
/// should surface to the user.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub handle: CorpusHandle,
    pub malformed: Vec<MalformedLine>,
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn malformed_line_numbers(&self) -> Vec<usize> {
        self.malformed.iter().map(|m| m.line).collect()
    }
}

/// Read-only view of an ingested store.
pub struct CorpusStore {
    dir: PathBuf,
    handle: CorpusHandle,
    data: File,
    offsets: Vec<u64>,
    ids: Vec<String>,
    by_id: HashMap<String, u32>,
}

impl std::fmt::Debug for CorpusStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorpusStore")
            .field("dir", &self.dir)
            .field("handle", &self.handle)
            .finish()
    }
}

impl CorpusStore {
    /// Parses `input` and (re)builds the store in `store_dir`.
    ///
    /// Malformed lines are skipped and listed in the report. A duplicate id
    /// aborts ingestion.
    pub fn ingest(input: &Path, store_dir: &Path) -> Result<IngestReport> {
        let unreadable = |source| CorpusError::Unreadable {
            path: input.to_path_buf(),
            source,
        };
        let file = File::open(input).map_err(unreadable)?;
        let mut reader = BufReader::new(file);

        fs::create_dir_all(store_dir)?;
        // Drop any previous manifest first so a failed rebuild is never
        // mistaken for a complete store.
        let manifest_path = store_dir.join(MANIFEST_FILE);
        if manifest_path.exists() {
            fs::remove_file(&manifest_path)?;
        }
        let mut data = BufWriter::new(File::create(store_dir.join(PASSAGES_FILE))?);
        let mut offsets: Vec<u64> = vec![0];
        let mut first_seen: HashMap<String, usize> = HashMap::new();
        let mut malformed = Vec::new();
        let mut hasher = Sha256::new();

        let mut raw = Vec::new();
        let mut line_no = 0usize;
        loop {
            raw.clear();
            let n = reader.read_until(b'\n', &mut raw).map_err(unreadable)?;
            if n == 0 {
                break;
            }
            hasher.update(&raw);
            line_no += 1;

            let line = match std::str::from_utf8(&raw) {
                Ok(s) => s.trim_end_matches(['\n', '\r']),
                Err(_) => {
                    malformed.push(MalformedLine {
                        line: line_no,
                        reason: "invalid UTF-8".into(),
                    });
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let passage: Passage = match serde_json::from_str(line) {
                Ok(p) => p,
                Err(e) => {
                    malformed.push(MalformedLine {
                        line: line_no,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            if let Err(reason) = passage.validate() {
                malformed.push(MalformedLine {
                    line: line_no,
                    reason,
                });
                continue;
            }
            if let Some(&first_line) = first_seen.get(&passage.id) {
                return Err(CorpusError::DuplicateId {
                    id: passage.id,
                    line: line_no,
                    first_line,
                });
            }
            first_seen.insert(passage.id.clone(), line_no);

            let mut encoded = serde_json::to_vec(&passage).expect("passage serializes");
            encoded.push(b'\n');
            data.write_all(&encoded)?;
            let last = *offsets.last().expect("offsets start with 0");
            offsets.push(last + encoded.len() as u64);
        }
        data.flush()?;

        let mut off = BufWriter::new(File::create(store_dir.join(OFFSETS_FILE))?);
        for o in &offsets {
            off.write_u64::<LittleEndian>(*o)?;
        }
        off.flush()?;

        let handle = CorpusHandle {
            doc_count: offsets.len() - 1,
            source_digest: hex::encode(hasher.finalize()),
        };
        let manifest = StoreManifest {
            format: STORE_FORMAT,
            doc_count: handle.doc_count,
            source_digest: handle.source_digest.clone(),
            sampler: SAMPLER_VERSION.to_string(),
        };
        fs::write(
            &manifest_path,
            serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
        )?;

        let mut warnings = Vec::new();
        if handle.doc_count == 0 {
            warnings.push("empty corpus".to_string());
        }
        if !malformed.is_empty() {
            let lines: Vec<String> = malformed.iter().map(|m| m.line.to_string()).collect();
            warnings.push(format!(
                "{} malformed line(s) skipped: {}",
                malformed.len(),
                lines.join(", ")
            ));
        }
        for w in &warnings {
            log::warn!("{}: {}", input.display(), w);
        }

        Ok(IngestReport {
            handle,
            malformed,
            warnings,
        })
    }

    /// Opens a previously ingested store.
    pub fn open(store_dir: &Path) -> Result<Self> {
        let manifest_path = store_dir.join(MANIFEST_FILE);
        let manifest: StoreManifest = match fs::read(&manifest_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| CorpusError::Corrupt(format!("manifest: {e}")))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(CorpusError::MissingStore(store_dir.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        if manifest.format != STORE_FORMAT {
            return Err(CorpusError::Corrupt(format!(
                "unsupported store format {}",
                manifest.format
            )));
        }

        let mut off_reader = BufReader::new(File::open(store_dir.join(OFFSETS_FILE))?);
        let mut offsets = Vec::with_capacity(manifest.doc_count + 1);
        for _ in 0..=manifest.doc_count {
            offsets.push(off_reader.read_u64::<LittleEndian>()?);
        }
        if off_reader.read(&mut [0u8; 1])? != 0 {
            return Err(CorpusError::Corrupt("trailing bytes in offsets".into()));
        }

        // One sequential pass to recover the ids; bodies stay on disk.
        let mut ids = Vec::with_capacity(manifest.doc_count);
        let reader = BufReader::new(File::open(store_dir.join(PASSAGES_FILE))?);
        #[derive(Deserialize)]
        struct IdOnly {
            id: String,
        }
        for line in reader.lines() {
            let line = line?;
            let rec: IdOnly = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Corrupt(format!("passages: {e}")))?;
            ids.push(rec.id);
        }
        if ids.len() != manifest.doc_count {
            return Err(CorpusError::Corrupt(format!(
                "manifest lists {} passages, store has {}",
                manifest.doc_count,
                ids.len()
            )));
        }
        let by_id = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();

        Ok(Self {
            dir: store_dir.to_path_buf(),
            handle: CorpusHandle {
                doc_count: manifest.doc_count,
                source_digest: manifest.source_digest,
            },
            data: File::open(store_dir.join(PASSAGES_FILE))?,
            offsets,
            ids,
            by_id,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn handle(&self) -> &CorpusHandle {
        &self.handle
    }

    pub fn len(&self) -> usize {
        self.handle.doc_count
    }

    pub fn is_empty(&self) -> bool {
        self.handle.doc_count == 0
    }

    /// Passage ids in ordinal (ingestion) order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn ordinal_of(&self, id: &str) -> Option<u32> {
        self.by_id.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn get_passage(&self, id: &str) -> Result<Passage> {
        let ordinal = self
            .ordinal_of(id)
            .ok_or_else(|| CorpusError::NotFound(id.to_string()))?;
        self.passage_at(ordinal)
    }

    pub fn passage_at(&self, ordinal: u32) -> Result<Passage> {
        let i = ordinal as usize;
        if i >= self.handle.doc_count {
            return Err(CorpusError::NotFound(format!("#{ordinal}")));
        }
        let (start, end) = (self.offsets[i], self.offsets[i + 1]);
        let mut buf = vec![0u8; (end - start) as usize];
        read_exact_at(&self.data, &mut buf, start)?;
        serde_json::from_slice(&buf).map_err(|e| CorpusError::Corrupt(format!("passage {i}: {e}")))
    }

    /// Draws `n` distinct passages not in `exclude`, deterministically in
    /// `(corpus, n, seed, exclude)`. Ids in `exclude` that are not in the
    /// corpus are ignored.
    pub fn sample_passages(
        &self,
        n: usize,
        seed: u64,
        exclude: &HashSet<String>,
    ) -> Result<Vec<Passage>> {
        self.sample_ordinals(n, seed, exclude)?
            .into_iter()
            .map(|o| self.passage_at(o))
            .collect()
    }

    /// Ordinal-level sampling behind [`Self::sample_passages`].
    pub fn sample_ordinals(&self, n: usize, seed: u64, exclude: &HashSet<String>) -> Result<Vec<u32>> {
        let excluded: HashSet<u32> = exclude.iter().filter_map(|id| self.ordinal_of(id)).collect();
        sample_ordinals(self.handle.doc_count, n, seed, &excluded)
    }
}

/// Chooses `n` distinct ordinals from `0..total` minus `excluded`.
///
/// Sparse requests (n at most a quarter of the pool) use rejection sampling
/// and never materialize the pool; dense ones run a partial Fisher-Yates
/// shuffle over the eligible ordinals.
pub(crate) fn sample_ordinals(
    total: usize,
    n: usize,
    seed: u64,
    excluded: &HashSet<u32>,
) -> Result<Vec<u32>> {
    let available = total - excluded.len();
    if n > available {
        return Err(CorpusError::Capacity {
            requested: n,
            available,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = SeededRng::new(seed);
    if n.saturating_mul(4) <= available {
        let mut picked = Vec::with_capacity(n);
        let mut seen = HashSet::with_capacity(n);
        while picked.len() < n {
            let o = rng.below(total as u64) as u32;
            if excluded.contains(&o) || !seen.insert(o) {
                continue;
            }
            picked.push(o);
        }
        Ok(picked)
    } else {
        let mut pool: Vec<u32> = (0..total as u32).filter(|o| !excluded.contains(o)).collect();
        for i in 0..n {
            let j = i + rng.below((pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(n);
        Ok(pool)
    }
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}

/// Converts a third-party corpus dump into the canonical line format.
pub trait DumpConverter {
    /// Writes canonical records to `out` and returns how many were written.
    fn convert(&self, input: &mut dyn BufRead, out: &mut dyn Write) -> io::Result<usize>;
}

/// Tab-separated dumps with an `id<TAB>text<TAB>title` header, the layout
/// used by the common 100-word Wikipedia passage split.
pub struct TsvDumpConverter;

impl DumpConverter for TsvDumpConverter {
    fn convert(&self, input: &mut dyn BufRead, out: &mut dyn Write) -> io::Result<usize> {
        let mut count = 0;
        let mut columns: Option<(usize, usize, usize)> = None;
        for line in input.lines() {
            let line = line?;
            let fields: Vec<&str> = line.split('\t').collect();
            let Some((id_col, text_col, title_col)) = columns else {
                let pos = |name: &str| fields.iter().position(|f| f.trim() == name);
                columns = Some(match (pos("id"), pos("text"), pos("title")) {
                    (Some(i), Some(t), Some(h)) => (i, t, h),
                    _ => {
                        return Err(io::Error::new(
                            io::ErrorKind::InvalidData,
                            "TSV header must name id, text and title columns",
                        ))
                    }
                });
                continue;
            };
            let get = |i: usize| fields.get(i).copied().unwrap_or("");
            let text = get(text_col).trim_matches('"');
            if text.is_empty() {
                continue;
            }
            let passage = Passage::new(get(id_col), get(title_col).trim_matches('"'), text);
            serde_json::to_writer(&mut *out, &passage)?;
            out.write_all(b"\n")?;
            count += 1;
        }
        Ok(count)
    }
}
