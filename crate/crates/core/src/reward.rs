//! Shaped sequence rewards, group-standardized advantages and the pieces of
//! the clipped surrogate objective.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, RacError, Result};

/// Below this group reward spread every advantage is set to zero.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub lambda_rank: f64,
    pub lambda_corr: f64,
    pub lambda_fmt_start: f64,
    pub lambda_fmt_end: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lambda_rank: 0.2,
            lambda_corr: 0.3,
            lambda_fmt_start: 1.0,
            lambda_fmt_end: 0.3,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_rank", self.lambda_rank),
            ("lambda_corr", self.lambda_corr),
            ("lambda_fmt_start", self.lambda_fmt_start),
            ("lambda_fmt_end", self.lambda_fmt_end),
        ] {
            ensure(v >= 0.0 && v.is_finite(), || {
                format!("{name} must be nonnegative, got {v}")
            })?;
        }
        Ok(())
    }
}

/// Linear format-weight schedule from `lambda_fmt_start` at 0 to
/// `lambda_fmt_end` at 1. The step fraction is clamped into `[0, 1]`.
pub fn fmt_weight(step_fraction: f64, weights: &RewardWeights) -> f64 {
    let t = step_fraction.clamp(0.0, 1.0);
    (1.0 - t) * weights.lambda_fmt_start + t * weights.lambda_fmt_end
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapedReward {
    pub slot: u32,
    pub r_task: f64,
    pub r_rank: f64,
    pub r_corr: f64,
    pub r_fmt: f64,
    pub lambda_fmt_now: f64,
    pub total: f64,
}

pub fn shaped_reward(
    slot: u32,
    r_task: f64,
    r_rank: f64,
    r_corr: f64,
    r_fmt: f64,
    weights: &RewardWeights,
    step_fraction: f64,
) -> ShapedReward {
    let lambda_fmt_now = fmt_weight(step_fraction, weights);
    let total = r_task
        + weights.lambda_rank * r_rank
        + weights.lambda_corr * r_corr
        + lambda_fmt_now * r_fmt;
    ShapedReward {
        slot,
        r_task,
        r_rank,
        r_corr,
        r_fmt,
        lambda_fmt_now,
        total,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantage {
    pub mu_r: f64,
    pub sigma_r: f64,
    pub advantages: Vec<f64>,
}

/// Standardize rewards within a group using the population mean and
/// standard deviation.
pub fn grpo_advantages(rewards: &[f64]) -> Result<GroupAdvantage> {
    ensure(!rewards.is_empty(), || {
        "cannot standardize an empty reward group".to_string()
    })?;
    if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(RacError::Numeric(format!("non-finite reward {bad}")));
    }
    let n = rewards.len() as f64;
    let mu_r = rewards.iter().sum::<f64>() / n;
    let sigma_r = (rewards.iter().map(|r| (r - mu_r).powi(2)).sum::<f64>() / n).sqrt();
    let advantages = if sigma_r < SIGMA_FLOOR {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - mu_r) / sigma_r).collect()
    };
    Ok(GroupAdvantage {
        mu_r,
        sigma_r,
        advantages,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerHyper {
    pub clip_eps: f64,
    pub beta_kl: f64,
}

impl Default for TrainerHyper {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            beta_kl: 0.0,
        }
    }
}

impl TrainerHyper {
    pub fn validate(&self) -> Result<()> {
        ensure(self.clip_eps > 0.0 && self.clip_eps < 1.0, || {
            format!("clip_eps must lie in (0, 1), got {}", self.clip_eps)
        })?;
        ensure(self.beta_kl >= 0.0 && self.beta_kl.is_finite(), || {
            format!("beta_kl must be nonnegative, got {}", self.beta_kl)
        })
    }
}

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`.
pub fn clipped_term(ratio: f64, advantage: f64, hyper: &TrainerHyper) -> Result<f64> {
    ensure(ratio > 0.0 && ratio.is_finite(), || {
        format!("importance ratio must be positive, got {ratio}")
    })?;
    let clipped = ratio.clamp(1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps);
    Ok((ratio * advantage).min(clipped * advantage))
}

/// Sampled estimate of `KL(policy || reference)`: the mean log-ratio over
/// actions drawn from the policy.
pub fn kl_estimate(logp_policy: &[f64], logp_ref: &[f64]) -> Result<f64> {
    ensure(!logp_policy.is_empty(), || "KL estimate needs at least one sample".into())?;
    ensure(logp_policy.len() == logp_ref.len(), || {
        format!(
            "KL estimate length mismatch: {} policy vs {} reference",
            logp_policy.len(),
            logp_ref.len()
        )
    })?;
    let sum: f64 = logp_policy.iter().zip(logp_ref).map(|(p, r)| p - r).sum();
    Ok(sum / logp_policy.len() as f64)
}

/// Mean over groups of the within-group mean shaped total. Empty groups are
/// skipped; no groups gives 0.
pub fn outer_objective<G: AsRef<[f64]>>(groups: &[G]) -> f64 {
    let means: Vec<f64> = groups
        .iter()
        .map(AsRef::as_ref)
        .filter(|g| !g.is_empty())
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    if means.is_empty() {
        0.0
    } else {
        means.iter().sum::<f64>() / means.len() as f64
    }
}
