use std::collections::HashMap;
use std::path::PathBuf;

use clap::Args;
use rac_core::calib_loss::{cal_objective, RacLossConfig};
use rac_core::grouping::{build_group, RolloutGroup};
use rac_core::reward::{outer_objective, RewardWeights};
use rac_core::schema::{Branch, Rollout};
use rac_core::shaping::shape_prompt;
use rac_core::{RacError, Result};
use serde::Serialize;

use crate::args::ShapingArgs;
use crate::io::{prepare_output, read_jsonl, write_jsonl};

#[derive(Debug, Args)]
pub struct ShapeArgs {
    /// Rollout JSONL as written by `rac parse`.
    #[arg(long)]
    pub rollouts: PathBuf,
    /// Shaped-reward JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training progress in [0, 1] for the format-weight schedule.
    #[arg(long, default_value_t = 0.0)]
    pub step_fraction: f64,
    #[command(flatten)]
    pub shaping: ShapingArgs,
}

/// Batch summary printed as one JSON line on stdout.
#[derive(Debug, Serialize)]
pub struct ShapeSummary {
    pub prompts: usize,
    pub groups: usize,
    pub rollouts: usize,
    pub n: u32,
    pub mean_rank_loss: f64,
    pub mean_corr_loss: f64,
    pub cal_objective: f64,
    pub outer_objective: f64,
}

fn take_group<'a>(
    by_key: &mut HashMap<(&'a str, Branch), Vec<Rollout>>,
    pid: &'a str,
    branch: Branch,
    n: u32,
) -> Result<Option<RolloutGroup>> {
    let Some(members) = by_key.remove(&(pid, branch)) else {
        return Ok(None);
    };
    if members.len() != n as usize {
        return Err(RacError::validation(format!(
            "prompt {pid} ({branch}): incomplete group, {} of {n} rollouts",
            members.len()
        )));
    }
    build_group(members).map(Some)
}

pub fn run(args: &ShapeArgs, force: bool) -> Result<ShapeSummary> {
    if !(0.0..=1.0).contains(&args.step_fraction) {
        return Err(RacError::validation(format!(
            "--step-fraction must lie in [0, 1], got {}",
            args.step_fraction
        )));
    }
    let mut losses = RacLossConfig::default();
    let mut weights = RewardWeights::default();
    args.shaping.apply(&mut losses, &mut weights)?;
    prepare_output(&args.out, force)?;

    let rollouts = read_jsonl::<Rollout>(&args.rollouts)?;
    let n = rollouts.iter().map(|(_, r)| r.slot).max().ok_or_else(|| {
        RacError::validation(format!("{} holds no rollouts", args.rollouts.display()))
    })?;

    // Prompts keep their order of first appearance.
    let mut order: Vec<&str> = Vec::new();
    let mut by_key: HashMap<(&str, Branch), Vec<Rollout>> = HashMap::new();
    for (line, r) in &rollouts {
        r.validate()
            .map_err(|e| RacError::validation(format!("{} line {line}: {e}", args.rollouts.display())))?;
        if !by_key.contains_key(&(r.prompt_id.as_str(), Branch::Clean))
            && !by_key.contains_key(&(r.prompt_id.as_str(), Branch::Corrupted))
        {
            order.push(&r.prompt_id);
        }
        by_key.entry((r.prompt_id.as_str(), r.branch)).or_default().push(r.clone());
    }

    let mut records = Vec::with_capacity(rollouts.len());
    let mut rank_losses = Vec::new();
    let mut corr_losses = Vec::new();
    let mut totals = Vec::new();
    for &pid in &order {
        let clean = take_group(&mut by_key, pid, Branch::Clean, n)?;
        let corrupted = take_group(&mut by_key, pid, Branch::Corrupted, n)?;
        let out = shape_prompt(clean.as_ref(), corrupted.as_ref(), &losses, &weights, args.step_fraction)?;
        for g in out.groups() {
            rank_losses.push(g.rank_loss);
            totals.push(g.records.iter().map(|r| r.total).collect::<Vec<_>>());
            records.extend(g.records.iter().cloned());
        }
        corr_losses.extend(out.corr_loss);
    }

    write_jsonl(&args.out, &records)?;
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    Ok(ShapeSummary {
        prompts: order.len(),
        groups: rank_losses.len(),
        rollouts: records.len(),
        n,
        mean_rank_loss: mean(&rank_losses),
        mean_corr_loss: mean(&corr_losses),
        cal_objective: cal_objective(&rank_losses, &corr_losses, losses.beta),
        outer_objective: outer_objective(&totals),
    })
}
