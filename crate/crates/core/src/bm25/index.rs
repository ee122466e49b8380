//! Inverted index construction and its binary on-disk form.
//!
//! File layout (`bm25.idx` in the store directory), all integers
//! little-endian, strings as `u32` length + UTF-8 bytes:
//!
//! ```text
//! magic "PIBM25\0\0" | version u32 | tokenizer flags u32 | source digest
//! N u32 | doc_lengths u32 × N | doc ids string × N
//! term count u64 | per term (sorted): term string, df u32, (ordinal u32, tf u32) × df
//! ```
//!
//! Terms are written in byte order and postings in ordinal order, so
//! rebuilding from the same store produces identical bytes.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::tokenize::{tokenize_with, TokenizerOptions};
use super::{IndexError, Result};
use crate::corpus::{CorpusStore, Passage};

pub const INDEX_FILE: &str = "bm25.idx";
const MAGIC: &[u8; 8] = b"PIBM25\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub(super) postings: BTreeMap<String, Vec<Posting>>,
    pub(super) doc_lengths: Vec<u32>,
    pub(super) doc_ids: Vec<String>,
    pub(super) avg_doc_len: f64,
    pub(super) tokenizer: TokenizerOptions,
    pub(super) source_digest: String,
}

/// Text a passage contributes to the index: title line, then body.
pub fn indexed_text(p: &Passage) -> String {
    if p.title.is_empty() {
        p.text.clone()
    } else {
        format!("{}\n{}", p.title, p.text)
    }
}

impl InvertedIndex {
    pub fn build(store: &CorpusStore, tokenizer: TokenizerOptions) -> Result<Self> {
        if store.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let mut docs = Vec::with_capacity(store.len());
        for ordinal in 0..store.len() as u32 {
            docs.push(store.passage_at(ordinal)?);
        }
        let mut index = Self::from_passages(&docs, tokenizer)?;
        index.source_digest = store.handle().source_digest.clone();
        Ok(index)
    }

    /// Builds an index over in-memory passages; ordinals follow slice order.
    pub fn from_passages(docs: &[Passage], tokenizer: TokenizerOptions) -> Result<Self> {
        if docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut total: u64 = 0;
        for (ordinal, doc) in docs.iter().enumerate() {
            let tokens = tokenize_with(&indexed_text(doc), tokenizer);
            let mut counts: HashMap<String, u32> = HashMap::new();
            for t in tokens.iter() {
                *counts.entry(t.clone()).or_default() += 1;
            }
            // Ordinals arrive in increasing order, so each push keeps the
            // postings list sorted.
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc: ordinal as u32,
                    tf,
                });
            }
            doc_lengths.push(tokens.len() as u32);
            doc_ids.push(doc.id.clone());
            total += tokens.len() as u64;
        }
        Ok(Self {
            postings,
            avg_doc_len: total as f64 / docs.len() as f64,
            doc_lengths,
            doc_ids,
            tokenizer,
            source_digest: String::new(),
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn tokenizer(&self) -> TokenizerOptions {
        self.tokenizer
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    pub fn path_in(store_dir: &Path) -> PathBuf {
        store_dir.join(INDEX_FILE)
    }

    pub fn write_to<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        let flags = self.tokenizer.remove_stopwords as u32 | (self.tokenizer.stem as u32) << 1;
        w.write_u32::<LittleEndian>(flags)?;
        write_str(&mut w, &self.source_digest)?;
        w.write_u32::<LittleEndian>(self.doc_lengths.len() as u32)?;
        for len in &self.doc_lengths {
            w.write_u32::<LittleEndian>(*len)?;
        }
        for id in &self.doc_ids {
            write_str(&mut w, id)?;
        }
        w.write_u64::<LittleEndian>(self.postings.len() as u64)?;
        for (term, list) in &self.postings {
            write_str(&mut w, term)?;
            w.write_u32::<LittleEndian>(list.len() as u32)?;
            for p in list {
                w.write_u32::<LittleEndian>(p.doc)?;
                w.write_u32::<LittleEndian>(p.tf)?;
            }
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(IndexError::Corrupt("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(IndexError::Corrupt(format!("unsupported index version {version}")));
        }
        let flags = r.read_u32::<LittleEndian>()?;
        let tokenizer = TokenizerOptions {
            remove_stopwords: flags & 1 != 0,
            stem: flags & 2 != 0,
        };
        let source_digest = read_str(&mut r)?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut doc_lengths = Vec::with_capacity(n);
        let mut total: u64 = 0;
        for _ in 0..n {
            let len = r.read_u32::<LittleEndian>()?;
            total += len as u64;
            doc_lengths.push(len);
        }
        let mut doc_ids = Vec::with_capacity(n);
        for _ in 0..n {
            doc_ids.push(read_str(&mut r)?);
        }
        let terms = r.read_u64::<LittleEndian>()?;
        let mut postings = BTreeMap::new();
        for _ in 0..terms {
            let term = read_str(&mut r)?;
            let df = r.read_u32::<LittleEndian>()? as usize;
            let mut list = Vec::with_capacity(df);
            for _ in 0..df {
                let doc = r.read_u32::<LittleEndian>()?;
                let tf = r.read_u32::<LittleEndian>()?;
                if doc as usize >= n {
                    return Err(IndexError::Corrupt(format!("posting for {term:?} points past N")));
                }
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        if n == 0 {
            return Err(IndexError::EmptyCorpus);
        }
        Ok(Self {
            postings,
            avg_doc_len: total as f64 / n as f64,
            doc_lengths,
            doc_ids,
            tokenizer,
            source_digest,
        })
    }

    pub fn save(&self, store_dir: &Path) -> Result<PathBuf> {
        let path = Self::path_in(store_dir);
        let tmp = path.with_extension("idx.tmp");
        self.write_to(File::create(&tmp)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Loads the index stored beside `store` and checks it was built from
    /// the same corpus file.
    pub fn load(store: &CorpusStore) -> Result<Self> {
        let path = Self::path_in(store.dir());
        let file = File::open(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => IndexError::Missing(path.clone()),
            _ => IndexError::Io(e),
        })?;
        let index = Self::read_from(file)?;
        if index.source_digest != store.handle().source_digest {
            return Err(IndexError::Stale);
        }
        Ok(index)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| IndexError::Corrupt("non-UTF-8 string".into()))
}
