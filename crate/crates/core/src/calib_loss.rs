//! Ranking-aware group loss, clean/corrupted pairwise loss, and their
//! rollout-level shaping attributions.
//!
//! Within a group, a correct rollout should carry at least `m_rank` more
//! confidence than an incorrect one:
//!
//! ```text
//! l_rank(i, j) = max(0, m_rank - (c_i - c_j))
//! ```
//!
//! Across a clean/corrupted slot pair at severity `s`, the corrupted view
//! should be at least `m_corr + alpha * s` less confident:
//!
//! ```text
//! l_corr(k) = max(0, c_corr - c_clean + m_corr + alpha * s)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::grouping::{comparison_set, RolloutGroup, SlotPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RacLossConfig {
    pub m_rank: f64,
    pub m_corr: f64,
    pub alpha: f64,
    /// Weight of the corruption term in the reported combined objective.
    pub beta: f64,
}

impl Default for RacLossConfig {
    fn default() -> Self {
        Self {
            m_rank: 0.05,
            m_corr: 0.05,
            alpha: 0.2,
            beta: 1.5,
        }
    }
}

impl RacLossConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.m_rank > 0.0 && self.m_rank.is_finite(), || {
            format!("m_rank must be positive, got {}", self.m_rank)
        })?;
        ensure(self.m_corr > 0.0 && self.m_corr.is_finite(), || {
            format!("m_corr must be positive, got {}", self.m_corr)
        })?;
        ensure(self.alpha >= 0.0 && self.alpha.is_finite(), || {
            format!("alpha must be nonnegative, got {}", self.alpha)
        })?;
        ensure(self.beta >= 0.0 && self.beta.is_finite(), || {
            format!("beta must be nonnegative, got {}", self.beta)
        })
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    ensure((0.0..=1.0).contains(&v), || format!("{name} = {v} outside [0, 1]"))
}

#[inline]
fn rank_hinge_unchecked(c_better: f64, c_worse: f64, m_rank: f64) -> f64 {
    (m_rank - (c_better - c_worse)).max(0.0)
}

#[inline]
fn corr_hinge_unchecked(c_clean: f64, c_corr: f64, s: f64, cfg: &RacLossConfig) -> f64 {
    (c_corr - c_clean + cfg.m_corr + cfg.alpha * s).max(0.0)
}

pub fn rank_hinge(c_i: f64, c_j: f64, m_rank: f64) -> Result<f64> {
    check_unit("c_i", c_i)?;
    check_unit("c_j", c_j)?;
    ensure(m_rank > 0.0, || format!("m_rank must be positive, got {m_rank}"))?;
    Ok(rank_hinge_unchecked(c_i, c_j, m_rank))
}

pub fn corr_hinge(c_clean: f64, c_corr: f64, s: f64, cfg: &RacLossConfig) -> Result<f64> {
    check_unit("c_clean", c_clean)?;
    check_unit("c_corr", c_corr)?;
    ensure(s > 0.0 && s <= 1.0, || format!("severity {s} outside (0, 1]"))?;
    cfg.validate()?;
    Ok(corr_hinge_unchecked(c_clean, c_corr, s, cfg))
}

/// Per-slot hinge values of every valid comparison pair, in
/// [`comparison_set`] order.
pub fn pair_rank_hinges(group: &RolloutGroup, cfg: &RacLossConfig) -> Vec<(u32, u32, f64)> {
    comparison_set(group)
        .into_iter()
        .map(|p| {
            let h = rank_hinge_unchecked(group.rollout(p.i).c, group.rollout(p.j).c, cfg.m_rank);
            (p.i, p.j, h)
        })
        .collect()
}

/// Mean rank hinge over the comparison set; 0 when the set is empty.
pub fn group_rank_loss(group: &RolloutGroup, cfg: &RacLossConfig) -> f64 {
    let hinges = pair_rank_hinges(group, cfg);
    if hinges.is_empty() {
        return 0.0;
    }
    hinges.iter().map(|h| h.2).sum::<f64>() / hinges.len() as f64
}

/// Per-rollout shaping terms for one group, indexed by `slot - 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShapingVector {
    pub r_rank: Vec<f64>,
    pub r_corr: Vec<f64>,
}

impl ShapingVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            r_rank: vec![0.0; n],
            r_corr: vec![0.0; n],
        }
    }
}

/// `r_rank_i = -(1 / |Q_i|) * sum of hinges over pairs containing i`.
pub fn rank_shaping(group: &RolloutGroup, cfg: &RacLossConfig) -> ShapingVector {
    let n = group.len();
    let mut total = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (i, j, h) in pair_rank_hinges(group, cfg) {
        for slot in [i, j] {
            total[slot as usize - 1] += h;
            count[slot as usize - 1] += 1;
        }
    }
    let r_rank = total
        .iter()
        .zip(&count)
        .map(|(&t, &k)| if k == 0 { 0.0 } else { -t / k as f64 })
        .collect();
    ShapingVector {
        r_rank,
        r_corr: vec![0.0; n],
    }
}

fn duo_severity(pairs: &[SlotPair<'_>]) -> Result<Option<f64>> {
    let Some(first) = pairs.first() else {
        return Ok(None);
    };
    ensure(pairs.iter().all(|p| p.severity == first.severity), || {
        "slot pairs of one clean/corrupted duo must share a severity".to_string()
    })?;
    Ok(Some(first.severity))
}

/// Corruption hinge per retained slot pair, as `(k, hinge)`.
pub fn pair_corr_hinges(pairs: &[SlotPair<'_>], cfg: &RacLossConfig) -> Result<Vec<(u32, f64)>> {
    duo_severity(pairs)?;
    pairs
        .iter()
        .map(|p| Ok((p.k, corr_hinge(p.clean.c, p.corrupted.c, p.severity, cfg)?)))
        .collect()
}

/// Mean corruption hinge over retained pairs; 0 when none are retained.
pub fn pair_corr_loss(pairs: &[SlotPair<'_>], cfg: &RacLossConfig) -> Result<f64> {
    let hinges = pair_corr_hinges(pairs, cfg)?;
    if hinges.is_empty() {
        return Ok(0.0);
    }
    Ok(hinges.iter().map(|h| h.1).sum::<f64>() / hinges.len() as f64)
}

/// Corruption shaping for a clean/corrupted duo of group size `n`. Both
/// members of slot pair `k` receive `-l_corr(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DuoShaping {
    pub clean: Vec<f64>,
    pub corrupted: Vec<f64>,
}

pub fn corr_shaping(pairs: &[SlotPair<'_>], n: usize, cfg: &RacLossConfig) -> Result<DuoShaping> {
    let mut clean = vec![0.0; n];
    let mut corrupted = vec![0.0; n];
    for (k, h) in pair_corr_hinges(pairs, cfg)? {
        let idx = k as usize - 1;
        ensure(idx < n, || format!("slot {k} outside group of size {n}"))?;
        // Subtracting from +0.0 keeps a zero hinge from serializing as -0.0.
        clean[idx] = 0.0 - h;
        corrupted[idx] = 0.0 - h;
    }
    Ok(DuoShaping { clean, corrupted })
}

/// Report-only combined objective: mean group rank loss plus `beta` times
/// the mean duo corruption loss. Empty inputs contribute 0.
pub fn cal_objective(rank_losses: &[f64], corr_losses: &[f64], beta: f64) -> f64 {
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    mean(rank_losses) + beta * mean(corr_losses)
}
