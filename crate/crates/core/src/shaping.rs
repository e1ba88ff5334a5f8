//! Per-prompt composition of the calibration losses into shaped rewards and
//! group-standardized advantages.

use serde::{Deserialize, Serialize};

use crate::calib_loss::{
    corr_shaping, group_rank_loss, pair_corr_loss, rank_shaping, RacLossConfig, ShapingVector,
};
use crate::error::{ensure, Result};
use crate::grouping::{slot_pairs, RolloutGroup};
use crate::reward::{grpo_advantages, shaped_reward, RewardWeights};
use crate::schema::Branch;

/// One line of the shaped-reward JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedRecord {
    pub prompt_id: String,
    pub branch: Branch,
    pub slot: u32,
    pub r_task: f64,
    pub r_rank: f64,
    pub r_corr: f64,
    pub r_fmt: f64,
    pub lambda_fmt: f64,
    pub total: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupOutcome {
    pub branch: Branch,
    pub rank_loss: f64,
    pub records: Vec<ShapedRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptOutcome {
    pub prompt_id: String,
    pub clean: Option<GroupOutcome>,
    pub corrupted: Option<GroupOutcome>,
    /// Present when both branches were supplied.
    pub corr_loss: Option<f64>,
}

impl PromptOutcome {
    pub fn groups(&self) -> impl Iterator<Item = &GroupOutcome> {
        self.clean.iter().chain(self.corrupted.iter())
    }
}

fn shape_group(
    group: &RolloutGroup,
    corr: &[f64],
    cfg: &RacLossConfig,
    weights: &RewardWeights,
    step_fraction: f64,
) -> Result<GroupOutcome> {
    let ShapingVector { r_rank, .. } = rank_shaping(group, cfg);
    let shaped: Vec<_> = group
        .rollouts
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            shaped_reward(
                r.slot,
                f64::from(r.a),
                r_rank[idx],
                corr[idx],
                f64::from(r.f),
                weights,
                step_fraction,
            )
        })
        .collect();
    let totals: Vec<f64> = shaped.iter().map(|s| s.total).collect();
    let adv = grpo_advantages(&totals)?;
    let records = shaped
        .iter()
        .zip(&adv.advantages)
        .map(|(s, &advantage)| ShapedRecord {
            prompt_id: group.prompt_id.clone(),
            branch: group.branch,
            slot: s.slot,
            r_task: s.r_task,
            r_rank: s.r_rank,
            r_corr: s.r_corr,
            r_fmt: s.r_fmt,
            lambda_fmt: s.lambda_fmt_now,
            total: s.total,
            advantage,
        })
        .collect();
    Ok(GroupOutcome {
        branch: group.branch,
        rank_loss: group_rank_loss(group, cfg),
        records,
    })
}

/// Shape the clean and/or corrupted group of one prompt. Ranking terms are
/// computed on each branch; corruption terms need both.
pub fn shape_prompt(
    clean: Option<&RolloutGroup>,
    corrupted: Option<&RolloutGroup>,
    cfg: &RacLossConfig,
    weights: &RewardWeights,
    step_fraction: f64,
) -> Result<PromptOutcome> {
    let prompt_id = match (clean, corrupted) {
        (Some(g), _) | (None, Some(g)) => g.prompt_id.clone(),
        (None, None) => {
            return Err(crate::RacError::validation("shape_prompt needs at least one group"))
        }
    };
    if let Some(g) = clean {
        ensure(g.branch == Branch::Clean, || format!("prompt {prompt_id}: expected a clean group"))?;
    }
    if let Some(g) = corrupted {
        ensure(g.branch == Branch::Corrupted, || {
            format!("prompt {prompt_id}: expected a corrupted group")
        })?;
    }

    let (corr_loss, duo) = match (clean, corrupted) {
        (Some(c), Some(x)) => {
            let pairs = slot_pairs(c, x)?;
            let loss = pair_corr_loss(&pairs, cfg)?;
            (Some(loss), Some(corr_shaping(&pairs, c.len(), cfg)?))
        }
        _ => (None, None),
    };

    let clean_out = clean
        .map(|g| {
            let zeros = vec![0.0; g.len()];
            let corr = duo.as_ref().map_or(&zeros, |d| &d.clean);
            shape_group(g, corr, cfg, weights, step_fraction)
        })
        .transpose()?;
    let corrupted_out = corrupted
        .map(|g| {
            let zeros = vec![0.0; g.len()];
            let corr = duo.as_ref().map_or(&zeros, |d| &d.corrupted);
            shape_group(g, corr, cfg, weights, step_fraction)
        })
        .transpose()?;

    Ok(PromptOutcome {
        prompt_id,
        clean: clean_out,
        corrupted: corrupted_out,
        corr_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::test_support::{clean, group};

    #[test]
    fn vanilla_weights_reduce_to_task_reward() {
        let w = RewardWeights {
            lambda_rank: 0.0,
            lambda_corr: 0.0,
            lambda_fmt_start: 0.0,
            lambda_fmt_end: 0.0,
        };
        let c = clean(&[0.2, 0.9, 0.5, 0.5], &[1, 0, 1, 0], &[1, 1, 1, 1]);
        let x = group(Branch::Corrupted, 0.4, &[0.9, 0.9, 0.1, 0.3], &[0, 0, 1, 1], &[1, 1, 1, 1]);
        let out = shape_prompt(Some(&c), Some(&x), &RacLossConfig::default(), &w, 0.3).unwrap();
        for g in out.groups() {
            for r in &g.records {
                assert_eq!(r.total, r.r_task);
            }
        }
        assert!(out.corr_loss.unwrap() > 0.0);
    }

    #[test]
    fn unanimous_group_has_zero_advantage_and_rank_loss() {
        let c = clean(&[0.2, 0.9, 0.5], &[1, 1, 1], &[1, 1, 1]);
        let out = shape_prompt(Some(&c), None, &RacLossConfig::default(), &RewardWeights::default(), 0.0)
            .unwrap();
        let g = out.clean.unwrap();
        assert_eq!(g.rank_loss, 0.0);
        assert!(g.records.iter().all(|r| r.advantage == 0.0));
    }

    #[test]
    fn corruption_terms_land_on_both_branches() {
        let c = clean(&[0.6, 0.9], &[1, 1], &[1, 1]);
        let x = group(Branch::Corrupted, 0.2, &[0.8, 0.1], &[1, 1], &[1, 1]);
        let out = shape_prompt(Some(&c), Some(&x), &RacLossConfig::default(), &RewardWeights::default(), 0.0)
            .unwrap();
        let cr = &out.clean.as_ref().unwrap().records;
        let xr = &out.corrupted.as_ref().unwrap().records;
        assert!((cr[0].r_corr + 0.29).abs() < 1e-12);
        assert!((xr[0].r_corr + 0.29).abs() < 1e-12);
        assert_eq!(cr[1].r_corr, 0.0);
        assert!((out.corr_loss.unwrap() - 0.145).abs() < 1e-12);
    }

    #[test]
    fn branch_mismatch_is_rejected() {
        let c = clean(&[0.6], &[1], &[1]);
        assert!(shape_prompt(None, Some(&c), &RacLossConfig::default(), &RewardWeights::default(), 0.0).is_err());
        assert!(shape_prompt(None, None, &RacLossConfig::default(), &RewardWeights::default(), 0.0).is_err());
    }
}
