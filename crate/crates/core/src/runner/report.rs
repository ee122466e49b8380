//! F1 and output-length summaries over a results file.
//!
//! One F1 table per (condition, k): rows are strategies, columns are
//! dataset/subset cells plus a pooled Micro-Average. Error cells count with
//! F1 = 0 and are tallied in a footer. Length means leave error cells out,
//! since those produced no output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Condition, Result, RunError, RunRecord};
use crate::datasets::Subset;
use crate::metrics::{avg_output_chars, micro_average, pct};
use crate::prompt::Strategy;

pub const MICRO_AVERAGE: &str = "Micro-Average";
pub const F1_RECORDS_FILE: &str = "report_f1.jsonl";
pub const LENGTH_RECORDS_FILE: &str = "report_length.jsonl";

fn column_of(r: &RunRecord) -> String {
    match r.subset {
        Subset::None => r.dataset.as_str().to_string(),
        s => format!("{}/{}", r.dataset, s),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Row {
    pub strategy: Strategy,
    /// Mean F1 per column, `None` where the strategy has no records.
    pub cells: Vec<Option<f64>>,
    pub micro_average: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Table {
    pub condition: Condition,
    pub k: usize,
    pub columns: Vec<String>,
    /// Distinct questions per column.
    pub column_n: Vec<usize>,
    pub total_n: usize,
    pub rows: Vec<F1Row>,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthCell {
    pub condition: Condition,
    pub k: usize,
    pub strategy: Strategy,
    pub dataset: String,
    pub n: usize,
    pub mean_chars: f64,
}

/// Flat, machine-readable form of one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub table: String,
    pub condition: Condition,
    pub k: usize,
    pub strategy: Strategy,
    pub column: String,
    pub n: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub f1_tables: Vec<F1Table>,
    pub lengths: Vec<LengthCell>,
}

type Group<'a> = BTreeMap<(Condition, usize), Vec<&'a RunRecord>>;

fn by_setting(records: &[RunRecord]) -> Group<'_> {
    let mut groups: Group<'_> = BTreeMap::new();
    for r in records {
        groups.entry((r.condition, r.k)).or_default().push(r);
    }
    groups
}

fn f1_table(condition: Condition, k: usize, records: &[&RunRecord]) -> F1Table {
    let columns: Vec<String> = records.iter().map(|r| column_of(r)).collect::<BTreeSet<_>>().into_iter().collect();
    let distinct = |filter: &dyn Fn(&RunRecord) -> bool| {
        records
            .iter()
            .filter(|r| filter(r))
            .map(|r| r.question_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    };
    let column_n = columns.iter().map(|c| distinct(&|r| &column_of(r) == c)).collect();
    let strategies: BTreeSet<Strategy> = records.iter().map(|r| r.strategy).collect();
    let rows = strategies
        .into_iter()
        .map(|s| {
            let mine: Vec<&RunRecord> = records.iter().copied().filter(|r| r.strategy == s).collect();
            let cells = columns
                .iter()
                .map(|c| {
                    let f1s: Vec<f64> = mine.iter().filter(|r| &column_of(r) == c).map(|r| r.score.f1).collect();
                    micro_average(&f1s).ok()
                })
                .collect();
            let f1s: Vec<f64> = mine.iter().map(|r| r.score.f1).collect();
            F1Row {
                strategy: s,
                cells,
                micro_average: micro_average(&f1s).expect("row has records"),
                n: mine.len(),
            }
        })
        .collect();
    F1Table {
        condition,
        k,
        columns,
        column_n,
        total_n: distinct(&|_| true),
        rows,
        errors: records.iter().filter(|r| r.is_error()).count(),
    }
}

/// Mean output length per (condition, k, strategy, dataset), error cells
/// excluded.
pub fn length_table(records: &[RunRecord]) -> Vec<LengthCell> {
    let mut groups: BTreeMap<(Condition, usize, Strategy, String), Vec<usize>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_error()) {
        groups
            .entry((r.condition, r.k, r.strategy, r.dataset.to_string()))
            .or_default()
            .push(r.outcome.char_len);
    }
    groups
        .into_iter()
        .map(|((condition, k, strategy, dataset), lens)| LengthCell {
            condition,
            k,
            strategy,
            dataset,
            n: lens.len(),
            mean_chars: avg_output_chars(&lens).expect("group is non-empty"),
        })
        .collect()
}

pub fn build_report(records: &[RunRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(RunError::Empty);
    }
    let f1_tables = by_setting(records)
        .into_iter()
        .map(|((c, k), rs)| f1_table(c, k, &rs))
        .collect();
    Ok(Report {
        f1_tables,
        lengths: length_table(records),
    })
}

fn setting_label(condition: Condition, k: usize) -> String {
    if k == 0 {
        format!("condition={condition}")
    } else {
        format!("condition={condition} k={k}")
    }
}

impl Report {
    pub fn f1_records(&self) -> Vec<ReportCell> {
        let mut out = Vec::new();
        for t in &self.f1_tables {
            for row in &t.rows {
                let cell = |column: &str, n: usize, value: f64| ReportCell {
                    table: "f1".into(),
                    condition: t.condition,
                    k: t.k,
                    strategy: row.strategy,
                    column: column.to_string(),
                    n,
                    value,
                };
                for ((col, n), v) in t.columns.iter().zip(&t.column_n).zip(&row.cells) {
                    if let Some(v) = v {
                        out.push(cell(col, *n, *v));
                    }
                }
                out.push(cell(MICRO_AVERAGE, row.n, row.micro_average));
            }
        }
        out
    }

    pub fn length_records(&self) -> Vec<ReportCell> {
        self.lengths
            .iter()
            .map(|l| ReportCell {
                table: "length".into(),
                condition: l.condition,
                k: l.k,
                strategy: l.strategy,
                column: l.dataset.clone(),
                n: l.n,
                value: l.mean_chars,
            })
            .collect()
    }

    /// Writes both record files into `dir` and returns their paths.
    pub fn write_records(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let write = |name: &str, cells: Vec<ReportCell>| -> Result<PathBuf> {
            let path = dir.join(name);
            let mut text = String::new();
            for c in cells {
                text.push_str(&serde_json::to_string(&c).expect("cell serializes"));
                text.push('\n');
            }
            fs::write(&path, text)?;
            Ok(path)
        };
        Ok((
            write(F1_RECORDS_FILE, self.f1_records())?,
            write(LENGTH_RECORDS_FILE, self.length_records())?,
        ))
    }

    /// Plain-text tables: F1 in percent with two decimals, lengths in
    /// characters with one decimal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.f1_tables {
            let mut header = vec!["strategy".to_string()];
            header.extend(t.columns.iter().zip(&t.column_n).map(|(c, n)| format!("{c} (n={n})")));
            header.push(format!("{MICRO_AVERAGE} (n={})", t.total_n));
            let body: Vec<Vec<String>> = t
                .rows
                .iter()
                .map(|r| {
                    let mut line = vec![r.strategy.to_string()];
                    line.extend(r.cells.iter().map(|c| c.map(pct).unwrap_or_else(|| "-".into())));
                    line.push(pct(r.micro_average));
                    line
                })
                .collect();
            let _ = writeln!(out, "F1 (%), {}", setting_label(t.condition, t.k));
            out.push_str(&grid(&header, &body));
            let _ = writeln!(out, "error cells: {} (scored as 0)\n", t.errors);
        }

        let mut settings: BTreeMap<(Condition, usize), Vec<&LengthCell>> = BTreeMap::new();
        for l in &self.lengths {
            settings.entry((l.condition, l.k)).or_default().push(l);
        }
        for ((condition, k), cells) in settings {
            let datasets: Vec<String> = cells.iter().map(|c| c.dataset.clone()).collect::<BTreeSet<_>>().into_iter().collect();
            let strategies: BTreeSet<Strategy> = cells.iter().map(|c| c.strategy).collect();
            let mut header = vec!["strategy".to_string()];
            header.extend(datasets.iter().cloned());
            let body: Vec<Vec<String>> = strategies
                .into_iter()
                .map(|s| {
                    let mut line = vec![s.to_string()];
                    line.extend(datasets.iter().map(|d| {
                        cells
                            .iter()
                            .find(|c| c.strategy == s && &c.dataset == d)
                            .map(|c| format!("{:.1}", c.mean_chars))
                            .unwrap_or_else(|| "-".into())
                    }));
                    line
                })
                .collect();
            let _ = writeln!(out, "Average output length (characters), {}", setting_label(condition, k));
            out.push_str(&grid(&header, &body));
            out.push('\n');
        }
        out
    }
}

fn grid(header: &[String], body: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            body.iter()
                .map(|r| r[i].chars().count())
                .chain([header[i].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let fmt_row = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        format!("{}\n", parts.join(" | ").trim_end())
    };
    let mut out = fmt_row(header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("{}\n", rule.join("-+-")));
    for r in body {
        out.push_str(&fmt_row(r));
    }
    out
}
