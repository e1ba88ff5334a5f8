use clap::Args;
use rac_core::calib_loss::RacLossConfig;
use rac_core::corruption::MixtureConfig;
use rac_core::reward::RewardWeights;
use rac_core::{Level, Result};

/// Overrides for the calibration losses and shaped-reward weights.
#[derive(Debug, Clone, Default, Args)]
pub struct ShapingArgs {
    /// Ranking margin.
    #[arg(long)]
    pub m_rank: Option<f64>,
    /// Base clean/corrupted confidence gap.
    #[arg(long)]
    pub m_corr: Option<f64>,
    /// Extra gap per unit of severity.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the corruption loss in the reported calibration objective.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight of the ranking reward term.
    #[arg(long)]
    pub lambda_rank: Option<f64>,
    /// Weight of the clean/corrupted reward term.
    #[arg(long)]
    pub lambda_corr: Option<f64>,
    /// Format-reward weight at the start of training.
    #[arg(long)]
    pub lambda_fmt_start: Option<f64>,
    /// Format-reward weight at the end of training.
    #[arg(long)]
    pub lambda_fmt_end: Option<f64>,
}

impl ShapingArgs {
    pub fn apply(&self, losses: &mut RacLossConfig, weights: &mut RewardWeights) -> Result<()> {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut losses.m_rank, self.m_rank);
        set(&mut losses.m_corr, self.m_corr);
        set(&mut losses.alpha, self.alpha);
        set(&mut losses.beta, self.beta);
        set(&mut weights.lambda_rank, self.lambda_rank);
        set(&mut weights.lambda_corr, self.lambda_corr);
        set(&mut weights.lambda_fmt_start, self.lambda_fmt_start);
        set(&mut weights.lambda_fmt_end, self.lambda_fmt_end);
        losses.validate()?;
        weights.validate()
    }
}

/// Severity mixture for corrupted branches, or a fixed level.
#[derive(Debug, Clone, Default, Args)]
pub struct SeverityArgs {
    /// Mixture as weight:level pairs, e.g. "0.5:T0.2,0.4:T0.4,0.1:T0.6".
    #[arg(long)]
    pub mixture: Option<MixtureConfig>,
    /// Use this level for every corrupted branch instead of the mixture.
    #[arg(long)]
    pub severity: Option<Level>,
}

impl SeverityArgs {
    pub fn validate(&self) -> Result<()> {
        if self.severity == Some(Level::Clean) {
            return Err(rac_core::RacError::validation(
                "--severity must be a corrupted level (T0.2..T1.0)",
            ));
        }
        Ok(())
    }
}
