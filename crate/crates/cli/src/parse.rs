use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

use clap::Args;
use rac_core::schema::{make_rollout, Branch, PromptSpec};
use rac_core::{RacError, Result};
use serde::{Deserialize, Serialize};

use crate::io::{prepare_outputs, read_jsonl, write_jsonl};

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Completions JSONL: {prompt_id, branch, slot, severity, completion}.
    #[arg(long)]
    pub completions: PathBuf,
    /// Prompt specs JSONL: {prompt_id, question, options, gold_letter}.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Rollout JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-record error log [default: <out>.errors.jsonl].
    #[arg(long)]
    pub errors: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct CompletionRecord {
    prompt_id: String,
    branch: Branch,
    slot: u32,
    #[serde(default)]
    severity: f64,
    completion: String,
    #[serde(default)]
    rollout_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct ErrorEntry<'a> {
    line: usize,
    prompt_id: &'a str,
    branch: Branch,
    slot: u32,
    error: String,
}

/// Returns the number of records that failed.
pub fn run(args: &ParseArgs, force: bool) -> Result<usize> {
    let errors_path = args
        .errors
        .clone()
        .unwrap_or_else(|| sidecar_path(&args.out));
    prepare_outputs([&args.out, &errors_path], force)?;

    let mut prompts: HashMap<String, PromptSpec> = HashMap::new();
    for (line, spec) in read_jsonl::<PromptSpec>(&args.prompts)? {
        spec.validate()
            .map_err(|e| RacError::validation(format!("{} line {line}: {e}", args.prompts.display())))?;
        if prompts.contains_key(&spec.prompt_id) {
            return Err(RacError::validation(format!(
                "{} line {line}: duplicate prompt_id {}",
                args.prompts.display(),
                spec.prompt_id
            )));
        }
        prompts.insert(spec.prompt_id.clone(), spec);
    }

    let records = read_jsonl::<CompletionRecord>(&args.completions)?;
    let mut seen = HashSet::new();
    let mut group_size: BTreeMap<(&str, Branch), u32> = BTreeMap::new();
    for (line, r) in &records {
        if !seen.insert((r.prompt_id.as_str(), r.branch, r.slot)) {
            return Err(RacError::validation(format!(
                "{} line {line}: duplicate completion for ({}, {}, slot {})",
                args.completions.display(),
                r.prompt_id,
                r.branch,
                r.slot
            )));
        }
        let n = group_size.entry((r.prompt_id.as_str(), r.branch)).or_default();
        *n = (*n).max(r.slot);
    }

    let mut rollouts = Vec::with_capacity(records.len());
    let mut errors = Vec::new();
    for (line, r) in &records {
        let Some(spec) = prompts.get(&r.prompt_id) else {
            errors.push(ErrorEntry {
                line: *line,
                prompt_id: &r.prompt_id,
                branch: r.branch,
                slot: r.slot,
                error: format!("unknown prompt_id {}", r.prompt_id),
            });
            continue;
        };
        let n = group_size[&(r.prompt_id.as_str(), r.branch)];
        let mut rollout = make_rollout(&r.prompt_id, r.branch, r.slot, n, r.severity, &r.completion, spec)
            .map_err(|e| RacError::validation(format!("{} line {line}: {e}", args.completions.display())))?;
        if let Some(id) = &r.rollout_id {
            rollout.rollout_id = id.clone();
        }
        rollouts.push(rollout);
    }

    write_jsonl(&args.out, &rollouts)?;
    write_jsonl(&errors_path, &errors)?;
    for e in &errors {
        eprintln!("warning: {} line {}: {}", args.completions.display(), e.line, e.error);
    }
    Ok(errors.len())
}

pub fn sidecar_path(out: &std::path::Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".errors.jsonl");
    out.with_file_name(name)
}
