//! Provenance check: rebuild the evidence and prompt of sampled records
//! from the run's config snapshot and compare digests.

use std::path::Path;

use super::{load_records, ExperimentConfig, Result, RunContext, RunError, RunRecord, SNAPSHOT_FILE};
use crate::corpus::sample_ordinals;
use crate::prompt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub checked: usize,
    /// Error cells that never produced a prompt; nothing to compare.
    pub skipped: usize,
    pub mismatches: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn check(ctx: &RunContext, r: &RunRecord) -> std::result::Result<(), String> {
    let q = ctx
        .question(&r.question_id)
        .ok_or_else(|| "question not in configured datasets".to_string())?;
    let passages = ctx.evidence(q, r.strategy, r.k)?;
    let ids: Vec<String> = passages.iter().map(|p| p.id.clone()).collect();
    if ids != r.passage_ids {
        return Err(format!("passage ids differ: recorded {:?}, rebuilt {:?}", r.passage_ids, ids));
    }
    let (plan, rendered) = prompt::build_prompt(r.strategy, &q.question, &passages, &ctx.instructions, &ctx.template)
        .map_err(|e| e.to_string())?;
    if plan.passages_digest != r.passages_digest {
        return Err("passages digest differs".into());
    }
    if rendered.hash != r.prompt_hash {
        return Err(format!("prompt hash differs: recorded {}, rebuilt {}", r.prompt_hash, rendered.hash));
    }
    Ok(())
}

/// Verifies `sample` records (all when `sample` exceeds the count), chosen
/// with the run's base seed.
pub fn verify_results(results: &Path, sample: usize) -> Result<VerifyReport> {
    let dir = results.parent().unwrap_or(Path::new("."));
    let snapshot = dir.join(SNAPSHOT_FILE);
    let text = std::fs::read_to_string(&snapshot)
        .map_err(|e| RunError::Config(format!("{}: {e}", snapshot.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", snapshot.display())))?;
    let ctx = RunContext::prepare(config)?;
    let records = load_records(results)?;
    if records.is_empty() {
        return Err(RunError::Empty);
    }
    let n = sample.min(records.len());
    let picked = sample_ordinals(records.len(), n, ctx.config.seed, &Default::default())?;

    let mut report = VerifyReport {
        checked: 0,
        skipped: 0,
        mismatches: Vec::new(),
    };
    for i in picked {
        let r = &records[i as usize];
        if r.prompt_hash.is_empty() {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        if let Err(e) = check(&ctx, r) {
            report
                .mismatches
                .push(format!("{} {} k={}: {e}", r.question_id, r.strategy, r.k));
        }
    }
    Ok(report)
}
