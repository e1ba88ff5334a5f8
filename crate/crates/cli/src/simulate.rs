use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use rac_core::metrics::BandedReport;
use rac_core::shaping::ShapedRecord;
use rac_core::trainer::{train_with, TrainConfig, TrainingReport, Variant};
use rac_core::{RacError, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{SeverityArgs, ShapingArgs};
use crate::io::{prepare_outputs, write_csv, write_json_pretty, write_jsonl};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory; each run gets its own subdirectory.
    #[arg(long)]
    pub out: PathBuf,
    /// TrainConfig JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Policy updates per run.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Questions sampled per update.
    #[arg(long)]
    pub prompts_per_iter: Option<usize>,
    /// Rollouts per group.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Evaluate every this many iterations.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Held-out questions per evaluation severity.
    #[arg(long)]
    pub eval_questions: Option<usize>,
    /// Number of equal-width confidence bins.
    #[arg(long)]
    pub bins: Option<usize>,
    #[command(flatten)]
    pub shaping: ShapingArgs,
    #[command(flatten)]
    pub severity: SeverityArgs,
    /// Switch off the shaping terms this variant does not use.
    #[arg(long, conflicts_with = "ablation")]
    pub variant: Option<Variant>,
    /// Train all four variants and print their banded metrics.
    #[arg(long, conflicts_with = "sweep")]
    pub ablation: bool,
    /// Sweep one weight, e.g. "lambda_rank=0,0.1,0.2,0.3,0.5". A bare name
    /// uses its default grid.
    #[arg(long)]
    pub sweep: Option<Sweep>,
    /// Also write every iteration's shaped rewards as JSONL.
    #[arg(long)]
    pub dump_records: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    LambdaRank,
    LambdaCorr,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::LambdaRank => "lambda_rank",
            SweepParam::LambdaCorr => "lambda_corr",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::LambdaRank => vec![0.0, 0.1, 0.2, 0.3, 0.5],
            SweepParam::LambdaCorr => vec![0.0, 0.2, 0.3, 0.4],
        }
    }

    fn set(self, cfg: &mut TrainConfig, value: f64) {
        match self {
            SweepParam::LambdaRank => cfg.weights.lambda_rank = value,
            SweepParam::LambdaCorr => cfg.weights.lambda_corr = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = RacError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, values) = match s.split_once('=') {
            Some((n, v)) => (n.trim(), Some(v)),
            None => (s.trim(), None),
        };
        let param = match name {
            "lambda_rank" => SweepParam::LambdaRank,
            "lambda_corr" => SweepParam::LambdaCorr,
            other => {
                return Err(RacError::validation(format!(
                    "cannot sweep {other:?}; expected lambda_rank or lambda_corr"
                )))
            }
        };
        let values = match values {
            None => param.default_grid(),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite() && *x >= 0.0)
                        .ok_or_else(|| RacError::validation(format!("bad sweep value {x:?}")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        if values.is_empty() {
            return Err(RacError::validation("sweep needs at least one value"));
        }
        Ok(Sweep { param, values })
    }
}

struct Run {
    name: String,
    label: String,
    config: TrainConfig,
}

#[derive(Debug, Serialize)]
struct BandRow<'a> {
    run: &'a str,
    metric: &'static str,
    clean: f64,
    mild: f64,
    severe: f64,
    avg: f64,
}

#[derive(Debug, Serialize)]
struct FrontierRow {
    param: &'static str,
    value: f64,
    accuracy: f64,
    ece: f64,
    brier: f64,
    ranking_pair_accuracy: Option<f64>,
}

fn base_config(args: &SimulateArgs, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| RacError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| RacError::Parse {
                line: e.line(),
                message: format!("{}: {e}", path.display()),
            })?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.set_seed(seed);
    }
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut cfg.iterations, args.iterations);
    set(&mut cfg.prompts_per_iter, args.prompts_per_iter);
    set(&mut cfg.n, args.n);
    set(&mut cfg.eval_every, args.eval_every);
    set(&mut cfg.eval_questions, args.eval_questions);
    set(&mut cfg.bins, args.bins);
    if let Some(lr) = args.learning_rate {
        cfg.learning_rate = lr;
    }
    args.shaping.apply(&mut cfg.losses, &mut cfg.weights)?;
    args.severity.validate()?;
    if let Some(mix) = &args.severity.mixture {
        cfg.mixture = mix.clone();
    }
    if args.severity.severity.is_some() {
        cfg.fixed_level = args.severity.severity;
    }
    if let Some(v) = args.variant {
        cfg = v.configure(&cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn plan(args: &SimulateArgs, base: &TrainConfig) -> Vec<Run> {
    if args.ablation {
        return Variant::ALL
            .iter()
            .map(|v| Run {
                name: slug(v.label()),
                label: v.label().to_string(),
                config: v.configure(base),
            })
            .collect();
    }
    if let Some(sweep) = &args.sweep {
        return sweep
            .values
            .iter()
            .map(|&value| {
                let mut config = base.clone();
                sweep.param.set(&mut config, value);
                let label = format!("{}={value}", sweep.param.name());
                Run { name: label.replace('=', "-"), label, config }
            })
            .collect();
    }
    let name = args.variant.map_or_else(|| "run".to_string(), |v| slug(v.label()));
    vec![Run { label: name.clone(), name, config: base.clone() }]
}

fn slug(label: &str) -> String {
    label.trim_start_matches('+').to_ascii_lowercase().replace('+', "-")
}

fn run_files(dir: &Path, dump: bool) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = ["report.json", "iterations.csv", "evals.csv"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    if dump {
        files.push(dir.join("shaped.jsonl"));
    }
    files
}

fn execute(run: &Run, dir: &Path, dump: bool) -> Result<TrainingReport> {
    let mut shaped: Vec<ShapedRecord> = Vec::new();
    let report = train_with(run.config.clone(), |_, records| {
        if dump {
            shaped.extend_from_slice(records);
        }
        Ok(())
    })?;
    write_json_pretty(&dir.join("report.json"), &report)?;
    write_csv(&dir.join("iterations.csv"), &report.iterations)?;
    write_csv(&dir.join("evals.csv"), &report.evals)?;
    if dump {
        write_jsonl(&dir.join("shaped.jsonl"), &shaped)?;
    }
    Ok(report)
}

fn band_rows<'a>(run: &'a str, b: &BandedReport) -> [BandRow<'a>; 3] {
    let row = |metric, x: &rac_core::metrics::Bands| BandRow {
        run,
        metric,
        clean: x.clean,
        mild: x.mild,
        severe: x.severe,
        avg: x.avg,
    };
    [row("accuracy", &b.accuracy), row("ece", &b.ece), row("brier", &b.brier)]
}

/// Fixed-width table of banded metrics, one block per metric.
pub fn format_table(rows: &[(String, BandedReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(7);
    let mut out = String::new();
    for metric in ["accuracy", "ece", "brier"] {
        let _ = writeln!(out, "{metric:<width$}  {:>7} {:>7} {:>7} {:>7}", "clean", "mild", "severe", "avg");
        for (label, b) in rows {
            let x = match metric {
                "accuracy" => b.accuracy,
                "ece" => b.ece,
                _ => b.brier,
            };
            let _ = writeln!(
                out,
                "{label:<width$}  {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
                x.clean, x.mild, x.severe, x.avg
            );
        }
        out.push('\n');
    }
    out
}

pub fn run(args: &SimulateArgs, seed: Option<u64>, force: bool) -> Result<String> {
    let base = base_config(args, seed)?;
    let runs = plan(args, &base);

    let summary_path = if args.ablation {
        Some(args.out.join("ablation.csv"))
    } else if args.sweep.is_some() {
        Some(args.out.join("frontier.csv"))
    } else {
        None
    };
    let mut files: Vec<PathBuf> = runs
        .iter()
        .flat_map(|r| run_files(&args.out.join(&r.name), args.dump_records))
        .collect();
    files.extend(summary_path.clone());
    prepare_outputs(&files, force)?;

    let reports: Vec<TrainingReport> = runs
        .par_iter()
        .map(|r| execute(r, &args.out.join(&r.name), args.dump_records))
        .collect::<Result<_>>()?;

    let banded: Vec<(String, BandedReport)> = runs
        .iter()
        .zip(&reports)
        .map(|(r, rep)| (r.label.clone(), rep.final_eval.banded))
        .collect();
    if let Some(path) = &summary_path {
        if let Some(sweep) = &args.sweep {
            let rows = sweep.values.iter().zip(&reports).map(|(&value, rep)| FrontierRow {
                param: sweep.param.name(),
                value,
                accuracy: rep.final_eval.banded.accuracy.avg,
                ece: rep.final_eval.banded.ece.avg,
                brier: rep.final_eval.banded.brier.avg,
                ranking_pair_accuracy: rep.final_eval.ranking_pair_accuracy,
            });
            write_csv(path, rows)?;
        } else {
            let rows = banded.iter().flat_map(|(label, b)| band_rows(label, b));
            write_csv(path, rows)?;
        }
    }
    Ok(format_table(&banded))
}
