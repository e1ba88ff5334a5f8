//! End-to-end shaped-reward GRPO training on the synthetic environment.
//!
//! Every iteration samples one question per prompt, observes it clean and at
//! a corrupted severity, draws `n` rollouts per branch, shapes their rewards
//! and takes one on-policy step. Because the batch is fresh the importance
//! ratio is 1 and the clipped surrogate reduces to advantage-weighted score
//! function ascent.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calib_loss::{cal_objective, RacLossConfig};
use crate::corruption::{sample_severity, MixtureConfig};
use crate::error::{ensure, RacError, Result};
use crate::grouping::build_group;
use crate::metrics::{band_aggregate, report, BandedReport, MetricsReport};
use crate::reward::{fmt_weight, kl_estimate, outer_objective, RewardWeights, TrainerHyper};
use crate::schema::{make_rollout, render_completion, AnswerOption, Branch, PromptSpec, Rollout};
use crate::severity::Level;
use crate::shaping::{shape_prompt, ShapedRecord};
use crate::synthenv::{
    accumulate_grad, log_prob, observe, policy_sample, EnvConfig, Observation, PolicyGrad,
    PolicyParams, SyntheticEnv, SyntheticQuestion,
};

/// Starting point of the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Std of the Gaussian answer-head initialization.
    pub answer_scale: f64,
    /// Scale of the prototype directions added to the answer head, standing
    /// in for a pretrained policy. Zero starts from scratch.
    pub answer_prior: f64,
    /// Intercept and slope of the confidence head.
    pub confidence_weights: [f64; 2],
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            answer_scale: 0.1,
            answer_prior: 4.0,
            confidence_weights: [1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n: usize,
    pub prompts_per_iter: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub weights: RewardWeights,
    pub losses: RacLossConfig,
    pub hyper: TrainerHyper,
    pub mixture: MixtureConfig,
    /// Replaces the mixture with a single corrupted level.
    pub fixed_level: Option<Level>,
    pub eval_every: usize,
    pub eval_questions: usize,
    pub bins: usize,
    pub env: EnvConfig,
    pub init: InitConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n: 8,
            prompts_per_iter: 64,
            iterations: 300,
            learning_rate: 3.0,
            weights: RewardWeights::default(),
            losses: RacLossConfig::default(),
            hyper: TrainerHyper::default(),
            mixture: MixtureConfig::default(),
            fixed_level: None,
            eval_every: 50,
            eval_questions: 500,
            bins: crate::metrics::DEFAULT_BINS,
            env: EnvConfig::default(),
            init: InitConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Default configuration with both the training and environment seeds set.
    pub fn seeded(seed: u64) -> Self {
        let mut cfg = Self::default();
        cfg.set_seed(seed);
        cfg
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.env.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.n >= 2, || format!("n must be at least 2, got {}", self.n))?;
        ensure(self.iterations >= 1, || "iterations must be at least 1".into())?;
        ensure(self.prompts_per_iter >= 1, || "prompts_per_iter must be at least 1".into())?;
        ensure(self.learning_rate > 0.0 && self.learning_rate.is_finite(), || {
            format!("learning_rate must be positive, got {}", self.learning_rate)
        })?;
        ensure(self.eval_every >= 1, || "eval_every must be at least 1".into())?;
        ensure(self.eval_questions >= 1, || "eval_questions must be at least 1".into())?;
        ensure(self.bins >= 1, || "bins must be at least 1".into())?;
        ensure(self.fixed_level != Some(Level::Clean), || {
            "the fixed training level must be a corrupted level".into()
        })?;
        ensure(self.init.answer_scale >= 0.0 && self.init.answer_scale.is_finite(), || {
            "init.answer_scale must be nonnegative".into()
        })?;
        ensure(self.init.answer_prior.is_finite(), || "init.answer_prior must be finite".into())?;
        ensure(self.init.confidence_weights.iter().all(|w| w.is_finite()), || {
            "init.confidence_weights must be finite".into()
        })?;
        self.weights.validate()?;
        self.losses.validate()?;
        self.hyper.validate()?;
        self.mixture.validate()?;
        self.env.validate()
    }
}

/// The four reward configurations compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "Vanilla-RL")]
    Vanilla,
    #[serde(rename = "+Pair")]
    Pair,
    #[serde(rename = "+Rank")]
    Rank,
    #[serde(rename = "+Pair+Rank")]
    PairRank,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Vanilla, Variant::Pair, Variant::Rank, Variant::PairRank];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Vanilla => "Vanilla-RL",
            Variant::Pair => "+Pair",
            Variant::Rank => "+Rank",
            Variant::PairRank => "+Pair+Rank",
        }
    }

    /// Zero the shaping weights this variant switches off.
    pub fn apply(self, weights: &RewardWeights) -> RewardWeights {
        let mut w = weights.clone();
        if matches!(self, Variant::Vanilla | Variant::Pair) {
            w.lambda_rank = 0.0;
        }
        if matches!(self, Variant::Vanilla | Variant::Rank) {
            w.lambda_corr = 0.0;
        }
        w
    }

    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            weights: self.apply(&base.weights),
            ..base.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = RacError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match key.to_ascii_lowercase().as_str() {
            "vanilla" | "vanillarl" => Ok(Variant::Vanilla),
            "pair" => Ok(Variant::Pair),
            "rank" => Ok(Variant::Rank),
            "pairrank" | "rankpair" | "full" => Ok(Variant::PairRank),
            _ => Err(RacError::validation(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    /// 1-based update number.
    pub iter: usize,
    pub mean_task_reward: f64,
    pub l_rank_clean: f64,
    pub l_rank_corr: f64,
    pub l_corr: f64,
    pub cal_objective: f64,
    pub lambda_fmt: f64,
    pub outer_objective: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// Number of completed updates when the evaluation ran.
    pub iter: usize,
    pub severity: f64,
    pub accuracy: f64,
    pub ece: f64,
    pub brier: f64,
    pub ranking_pair_accuracy: Option<f64>,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityEval {
    pub severity: f64,
    pub metrics: MetricsReport,
    /// Fraction of (correct, incorrect) rollout pairs within a group where
    /// the correct one is strictly more confident. `None` without pairs.
    pub ranking_pair_accuracy: Option<f64>,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEval {
    pub per_severity: Vec<SeverityEval>,
    pub banded: BandedReport,
    pub ranking_pair_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub config: TrainConfig,
    pub iterations: Vec<IterationRow>,
    pub evals: Vec<EvalRow>,
    pub final_eval: FinalEval,
    pub final_params: PolicyParams,
}

/// Evaluation severities: the clean view and the five corrupted levels.
pub fn eval_severities() -> Vec<f64> {
    Level::ALL.iter().map(|l| l.severity()).collect()
}

const ANSWER_LETTERS: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";

fn letter(index: usize) -> String {
    ANSWER_LETTERS[index..index + 1].to_string()
}

fn prompt_spec(prompt_id: &str, q: &SyntheticQuestion) -> PromptSpec {
    PromptSpec {
        prompt_id: prompt_id.to_string(),
        question_text: format!("synthetic question {}", q.question_id),
        options: (0..q.k_options)
            .map(|i| AnswerOption {
                letter: letter(i),
                text: format!("option {}", i + 1),
            })
            .collect(),
        gold_letter: letter(q.correct_index),
        image_ref: None,
    }
}

pub fn init_params(cfg: &TrainConfig, env: &SyntheticEnv) -> PolicyParams {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x494e_4954);
    let mut params = PolicyParams::zeros(cfg.env.d, cfg.env.k_options, cfg.env.jitter_std);
    if cfg.init.answer_scale > 0.0 {
        let normal = Normal::new(0.0, cfg.init.answer_scale).expect("validated scale");
        params.answer_weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
    }
    if cfg.init.answer_prior != 0.0 {
        let k = params.k;
        for (j, proto) in env.prototypes().iter().enumerate() {
            let norm = proto.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for (r, x) in proto.iter().enumerate() {
                params.answer_weights[r * k + j] += cfg.init.answer_prior * x / norm;
            }
        }
    }
    params.confidence_weights = cfg.init.confidence_weights;
    params
}

/// Mutable training state threaded through [`run_iteration`].
pub struct TrainState {
    pub config: TrainConfig,
    pub env: SyntheticEnv,
    pub params: PolicyParams,
    pub reference: Option<PolicyParams>,
    /// Completed updates.
    pub iter: usize,
    rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let env = SyntheticEnv::new(config.env.clone())?;
        let params = init_params(&config, &env);
        let reference = (config.hyper.beta_kl > 0.0).then(|| params.clone());
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            env,
            params,
            reference,
            iter: 0,
            rng,
        })
    }

    fn step_fraction(&self) -> f64 {
        if self.config.iterations <= 1 {
            0.0
        } else {
            (self.iter as f64 / (self.config.iterations - 1) as f64).min(1.0)
        }
    }
}

pub struct IterationOutcome {
    pub row: IterationRow,
    pub records: Vec<ShapedRecord>,
}

struct Sampled {
    obs: Observation,
    actions: Vec<(usize, f64)>,
    rollouts: Vec<Rollout>,
}

fn sample_branch(
    state: &mut TrainState,
    spec: &PromptSpec,
    branch: Branch,
    obs: Observation,
) -> Result<Sampled> {
    let n = state.config.n;
    let mut actions = Vec::with_capacity(n);
    let mut rollouts = Vec::with_capacity(n);
    for slot in 1..=n {
        let s = policy_sample(&state.params, &obs, &mut state.rng)?;
        let completion = render_completion("", &letter(s.answer_index), s.confidence);
        rollouts.push(make_rollout(
            &spec.prompt_id,
            branch,
            slot as u32,
            n as u32,
            obs.severity,
            &completion,
            spec,
        )?);
        actions.push((s.answer_index, s.confidence));
    }
    Ok(Sampled { obs, actions, rollouts })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// One sampling, shaping and update step.
pub fn run_iteration(state: &mut TrainState) -> Result<IterationOutcome> {
    let cfg = state.config.clone();
    let t = state.step_fraction();
    let update = state.iter + 1;
    let mut grad = PolicyGrad::zeros(&state.params);
    let mut records = Vec::new();
    let mut rank_clean = Vec::new();
    let mut rank_corr = Vec::new();
    let mut corr_losses = Vec::new();
    let mut group_totals: Vec<Vec<f64>> = Vec::new();
    let mut task = Vec::new();
    let mut batch: Vec<(Sampled, Vec<f64>)> = Vec::new();

    for p in 0..cfg.prompts_per_iter {
        let qid = (state.iter * cfg.prompts_per_iter + p) as u64;
        let q = state.env.gen_question(&mut state.rng, qid);
        let level = match cfg.fixed_level {
            Some(l) => l,
            None => sample_severity(&cfg.mixture, &mut state.rng),
        };
        let spec = prompt_spec(&format!("it{update}-p{p}"), &q);
        let clean_obs = observe(&q, 0.0, &mut state.rng);
        let corr_obs = observe(&q, level.severity(), &mut state.rng);
        let clean = sample_branch(state, &spec, Branch::Clean, clean_obs)?;
        let corrupted = sample_branch(state, &spec, Branch::Corrupted, corr_obs)?;

        let clean_group = build_group(clean.rollouts.clone())?;
        let corr_group = build_group(corrupted.rollouts.clone())?;
        let outcome = shape_prompt(Some(&clean_group), Some(&corr_group), &cfg.losses, &cfg.weights, t)?;
        corr_losses.extend(outcome.corr_loss);
        for (sampled, group) in [(clean, outcome.clean), (corrupted, outcome.corrupted)] {
            let group = group.expect("both branches were shaped");
            match group.branch {
                Branch::Clean => rank_clean.push(group.rank_loss),
                Branch::Corrupted => rank_corr.push(group.rank_loss),
            }
            task.extend(group.records.iter().map(|r| r.r_task));
            group_totals.push(group.records.iter().map(|r| r.total).collect());
            let adv = group.records.iter().map(|r| r.advantage).collect();
            records.extend(group.records);
            batch.push((sampled, adv));
        }
    }

    let scale = 1.0 / (batch.len() * cfg.n) as f64;
    for (sampled, adv) in &batch {
        for (&(answer, conf), a) in sampled.actions.iter().zip(adv) {
            if *a != 0.0 {
                accumulate_grad(&state.params, &sampled.obs, answer, conf, a * scale, &mut grad)?;
            }
        }
    }

    let mut kl = 0.0;
    if let Some(reference) = state.reference.as_ref() {
        let mut lp = Vec::new();
        let mut lp_ref = Vec::new();
        for (sampled, _) in &batch {
            for &(answer, conf) in &sampled.actions {
                let (a, c) = log_prob(&state.params, &sampled.obs, answer, conf)?;
                let (ra, rc) = log_prob(reference, &sampled.obs, answer, conf)?;
                lp.push(a + c);
                lp_ref.push(ra + rc);
                let weight = -cfg.hyper.beta_kl * (a + c - ra - rc) * scale;
                accumulate_grad(&state.params, &sampled.obs, answer, conf, weight, &mut grad)?;
            }
        }
        kl = kl_estimate(&lp, &lp_ref)?;
    }

    if !grad.is_finite() {
        let prompts: Vec<&str> = records.iter().map(|r| r.prompt_id.as_str()).collect();
        let bad_adv = records.iter().filter(|r| !r.advantage.is_finite()).count();
        return Err(RacError::Numeric(format!(
            "non-finite gradient at update {update}: {} prompts ({}..{}), {bad_adv} non-finite advantages, params finite: {}",
            prompts.len() / (2 * cfg.n),
            prompts.first().unwrap_or(&""),
            prompts.last().unwrap_or(&""),
            state.params.is_finite()
        )));
    }
    state.params.add_scaled(&grad, cfg.learning_rate);
    state.iter = update;

    let all_rank: Vec<f64> = rank_clean.iter().chain(&rank_corr).copied().collect();
    let row = IterationRow {
        iter: update,
        mean_task_reward: mean(&task),
        l_rank_clean: mean(&rank_clean),
        l_rank_corr: mean(&rank_corr),
        l_corr: mean(&corr_losses),
        cal_objective: cal_objective(&all_rank, &corr_losses, cfg.losses.beta),
        lambda_fmt: fmt_weight(t, &cfg.weights),
        outer_objective: outer_objective(&group_totals),
        kl,
    };
    Ok(IterationOutcome { row, records })
}

/// Fraction of pairs `(i, j)` within each group with `a_i > a_j` where
/// `c_i > c_j` strictly. Ties count as failures.
pub fn ranking_pair_accuracy(groups: &[Vec<(f64, u8)>]) -> Option<f64> {
    let mut total = 0u64;
    let mut hits = 0u64;
    for g in groups {
        for &(ci, ai) in g {
            for &(cj, aj) in g {
                if ai > aj {
                    total += 1;
                    hits += u64::from(ci > cj);
                }
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Held-out questions, disjoint in id range from training questions.
pub fn eval_set(env: &SyntheticEnv, count: usize, seed: u64) -> Vec<SyntheticQuestion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4556_414c);
    (0..count)
        .map(|i| env.gen_question(&mut rng, u64::MAX - i as u64))
        .collect()
}

/// Sample `n` rollouts per question at each severity and score them.
/// Randomness is drawn from `seed` alone so repeated evaluations of
/// different parameters share observation noise.
pub fn evaluate_policy(
    params: &PolicyParams,
    questions: &[SyntheticQuestion],
    severities: &[f64],
    n: usize,
    bins: usize,
    seed: u64,
) -> Result<Vec<SeverityEval>> {
    ensure(!questions.is_empty(), || "evaluation needs at least one question".into())?;
    ensure(n >= 1, || "evaluation needs at least one rollout per question".into())?;
    severities
        .iter()
        .enumerate()
        .map(|(si, &s)| {
            ensure((0.0..=1.0).contains(&s), || format!("severity {s} outside [0, 1]"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(si as u64));
            let mut groups = Vec::with_capacity(questions.len());
            for q in questions {
                let obs = observe(q, s, &mut rng);
                let mut g = Vec::with_capacity(n);
                for _ in 0..n {
                    let sample = policy_sample(params, &obs, &mut rng)?;
                    g.push((sample.confidence, u8::from(sample.answer_index == q.correct_index)));
                }
                groups.push(g);
            }
            let flat: Vec<(f64, u8)> = groups.iter().flatten().copied().collect();
            let metrics = report(&flat, bins)?;
            Ok(SeverityEval {
                severity: s,
                mean_confidence: flat.iter().map(|r| r.0).sum::<f64>() / flat.len() as f64,
                ranking_pair_accuracy: ranking_pair_accuracy(&groups),
                metrics,
            })
        })
        .collect()
}

fn final_eval(per_severity: Vec<SeverityEval>) -> Result<FinalEval> {
    let mut by_level = BTreeMap::new();
    for e in &per_severity {
        if let Some(level) = Level::from_severity(e.severity) {
            by_level.insert(level, e.metrics.clone());
        }
    }
    let banded = band_aggregate(&by_level)?;
    let rpa: Vec<f64> = per_severity.iter().filter_map(|e| e.ranking_pair_accuracy).collect();
    Ok(FinalEval {
        ranking_pair_accuracy: (!rpa.is_empty()).then(|| mean(&rpa)),
        per_severity,
        banded,
    })
}

/// Train and evaluate. `on_iteration` sees every iteration's shaped records
/// (used for the optional JSONL dump).
pub fn train_with<F>(config: TrainConfig, mut on_iteration: F) -> Result<TrainingReport>
where
    F: FnMut(&IterationRow, &[ShapedRecord]) -> Result<()>,
{
    let mut state = TrainState::new(config)?;
    let cfg = state.config.clone();
    let held_out = eval_set(&state.env, cfg.eval_questions, cfg.seed);
    let severities = eval_severities();
    let eval_seed = cfg.seed ^ 0x5445_5354;
    let mut evals = Vec::new();
    let mut push_eval = |iter: usize, params: &PolicyParams| -> Result<Vec<SeverityEval>> {
        let res = evaluate_policy(params, &held_out, &severities, cfg.n, cfg.bins, eval_seed)?;
        evals.extend(res.iter().map(|e| EvalRow {
            iter,
            severity: e.severity,
            accuracy: e.metrics.accuracy,
            ece: e.metrics.ece,
            brier: e.metrics.brier,
            ranking_pair_accuracy: e.ranking_pair_accuracy,
            mean_confidence: e.mean_confidence,
        }));
        Ok(res)
    };

    push_eval(0, &state.params)?;
    let mut iterations = Vec::with_capacity(cfg.iterations);
    let mut last = None;
    while state.iter < cfg.iterations {
        let outcome = run_iteration(&mut state)?;
        on_iteration(&outcome.row, &outcome.records)?;
        iterations.push(outcome.row);
        if state.iter % cfg.eval_every == 0 || state.iter == cfg.iterations {
            last = Some(push_eval(state.iter, &state.params)?);
        }
    }
    let final_eval = final_eval(last.expect("at least one iteration ran"))?;
    Ok(TrainingReport {
        config: cfg,
        iterations,
        evals,
        final_eval,
        final_params: state.params,
    })
}

pub fn train(config: TrainConfig) -> Result<TrainingReport> {
    train_with(config, |_, _| Ok(()))
}
