//! Prompt-level rollout groups, valid comparison sets and clean/corrupted
//! slot pairing.

use crate::error::{ensure, RacError, Result};
use crate::schema::{Branch, Rollout};

/// The `n` rollouts sampled for one prompt on one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub prompt_id: String,
    pub branch: Branch,
    pub severity: f64,
    /// Sorted by slot; slot `k` lives at index `k - 1`.
    pub rollouts: Vec<Rollout>,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn rollout(&self, slot: u32) -> &Rollout {
        &self.rollouts[slot as usize - 1]
    }
}

/// Ordered pair of slots `(i, j)` where rollout `i` is strictly more correct
/// than rollout `j` and both are format-valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComparisonPair {
    pub i: u32,
    pub j: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotPair<'a> {
    pub k: u32,
    pub clean: &'a Rollout,
    pub corrupted: &'a Rollout,
    pub severity: f64,
}

pub fn build_group(mut rollouts: Vec<Rollout>) -> Result<RolloutGroup> {
    let first = rollouts
        .first()
        .ok_or_else(|| RacError::validation("cannot build a group from zero rollouts"))?;
    let (prompt_id, branch, severity) = (first.prompt_id.clone(), first.branch, first.severity);
    for r in &rollouts {
        r.validate()?;
        ensure(
            r.prompt_id == prompt_id && r.branch == branch && r.severity == severity,
            || {
                format!(
                    "group {prompt_id}/{branch}: rollout {} has prompt {}, branch {}, severity {}",
                    r.rollout_id, r.prompt_id, r.branch, r.severity
                )
            },
        )?;
    }
    rollouts.sort_by_key(|r| r.slot);
    for (idx, r) in rollouts.iter().enumerate() {
        let expected = idx as u32 + 1;
        if r.slot != expected {
            let msg = if idx > 0 && rollouts[idx - 1].slot == r.slot {
                format!("group {prompt_id}/{branch}: duplicate slot {}", r.slot)
            } else {
                format!(
                    "group {prompt_id}/{branch}: slots must be exactly 1..{}, missing slot {expected}",
                    rollouts.len()
                )
            };
            return Err(RacError::Validation(msg));
        }
    }
    Ok(RolloutGroup {
        prompt_id,
        branch,
        severity,
        rollouts,
    })
}

/// All `(i, j)` with `a_i > a_j`, `f_i = f_j = 1`, in slot order.
pub fn comparison_set(group: &RolloutGroup) -> Vec<ComparisonPair> {
    let valid: Vec<&Rollout> = group.rollouts.iter().filter(|r| r.format_ok()).collect();
    let mut pairs = Vec::new();
    for better in &valid {
        for worse in &valid {
            // Numeric comparison so graded verifiers slot in unchanged.
            if f64::from(better.a) > f64::from(worse.a) {
                pairs.push(ComparisonPair {
                    i: better.slot,
                    j: worse.slot,
                });
            }
        }
    }
    pairs
}

/// Slot-wise pairs between a clean group and its corrupted counterpart.
/// Slots where either member failed the format check are dropped.
pub fn slot_pairs<'a>(
    clean: &'a RolloutGroup,
    corrupted: &'a RolloutGroup,
) -> Result<Vec<SlotPair<'a>>> {
    ensure(clean.branch == Branch::Clean, || {
        format!("group {}: first argument must be the clean branch", clean.prompt_id)
    })?;
    ensure(corrupted.branch == Branch::Corrupted, || {
        format!(
            "group {}: second argument must be the corrupted branch",
            corrupted.prompt_id
        )
    })?;
    ensure(clean.prompt_id == corrupted.prompt_id, || {
        format!(
            "slot pairing across different prompts: {} vs {}",
            clean.prompt_id, corrupted.prompt_id
        )
    })?;
    ensure(clean.len() == corrupted.len(), || {
        format!(
            "prompt {}: clean group has {} rollouts, corrupted group has {}",
            clean.prompt_id,
            clean.len(),
            corrupted.len()
        )
    })?;
    ensure(corrupted.severity > 0.0, || {
        format!("prompt {}: corrupted group has severity 0", corrupted.prompt_id)
    })?;

    Ok(clean
        .rollouts
        .iter()
        .zip(&corrupted.rollouts)
        .filter(|(c, x)| c.format_ok() && x.format_ok())
        .map(|(c, x)| SlotPair {
            k: c.slot,
            clean: c,
            corrupted: x,
            severity: corrupted.severity,
        })
        .collect())
}
