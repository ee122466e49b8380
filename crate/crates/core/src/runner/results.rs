//! Append-only JSON-lines results file.
//!
//! Every record is one line written with a single `write_all` and flushed
//! before the next. A crash can therefore leave at most one partial final
//! line, which [`ResultsWriter::open`] truncates away.

use std::fs::{self, File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{Result, RunError, RunRecord};

pub const RESULTS_FILE: &str = "results.jsonl";

/// Parses the valid prefix of a results file's contents.
///
/// Returns the records, the byte length of the prefix, and whether the
/// last kept record lacks its newline. An unparsable final line without a
/// newline is a crash artifact and is left out of the prefix; any other
/// unparsable line is corruption.
fn parse_prefix(path: &Path, text: &str) -> Result<(Vec<RunRecord>, usize, bool)> {
    let mut records = Vec::new();
    let mut offset = 0;
    for (i, chunk) in text.split_inclusive('\n').enumerate() {
        let terminated = chunk.ends_with('\n');
        let line = chunk.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            if !terminated {
                break;
            }
            offset += chunk.len();
            continue;
        }
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) => {
                records.push(r);
                offset += chunk.len();
                if !terminated {
                    return Ok((records, offset, true));
                }
            }
            Err(_) if !terminated => break,
            Err(e) => {
                return Err(RunError::Results {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok((records, offset, false))
}

/// Reads every complete record; a partial final line is ignored.
pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Results {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(parse_prefix(path, &text)?.0)
}

pub struct ResultsWriter {
    path: PathBuf,
    file: File,
}

impl ResultsWriter {
    /// Opens (creating if needed) for appending, truncating a partial tail,
    /// and returns the records already present.
    pub fn open(path: &Path) -> Result<(Self, Vec<RunRecord>)> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let text = fs::read_to_string(path)?;
        let (records, valid, needs_newline) = parse_prefix(path, &text)?;
        if valid < text.len() {
            log::warn!(
                "{}: dropping {} byte(s) of incomplete trailing record",
                path.display(),
                text.len() - valid
            );
            file.set_len(valid as u64)?;
        }
        file.seek(SeekFrom::Start(valid as u64))?;
        if needs_newline {
            file.write_all(b"\n")?;
        }
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            records,
        ))
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).map_err(|e| RunError::Results {
            path: self.path.clone(),
            message: e.to_string(),
        })?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
