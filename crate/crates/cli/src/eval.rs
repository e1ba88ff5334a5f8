use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use rac_core::metrics::{band_aggregate, macro_average, report, BandedReport, MetricsReport, PredictionRecord, DEFAULT_BINS};
use rac_core::{Level, RacError, Result};
use serde::{Deserialize, Serialize};

use crate::io::{prepare_outputs, read_jsonl, write_csv, write_json_pretty};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction JSONL: {benchmark, severity, c, a}.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Output directory for report.json and metrics.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of equal-width confidence bins.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Benchmark name for records that carry none (e.g. rollout JSONL).
    #[arg(long, default_value = "default")]
    pub benchmark: String,
}

/// A prediction line; extra fields such as those of a rollout are ignored.
#[derive(Debug, Deserialize)]
struct PredictionLine {
    #[serde(default)]
    benchmark: Option<String>,
    severity: f64,
    c: f64,
    a: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Headline {
    pub accuracy: f64,
    pub brier: f64,
    pub ece: f64,
}

impl From<&MetricsReport> for Headline {
    fn from(r: &MetricsReport) -> Self {
        Headline {
            accuracy: r.accuracy,
            brier: r.brier,
            ece: r.ece,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BenchmarkReport {
    pub overall: MetricsReport,
    pub per_severity: BTreeMap<Level, MetricsReport>,
    pub bands: Option<BandedReport>,
}

#[derive(Debug, Serialize)]
pub struct MacroReport {
    pub overall: Headline,
    pub bands: Option<BandedReport>,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub bins: usize,
    pub n: usize,
    pub banded: bool,
    pub warnings: Vec<String>,
    pub benchmarks: BTreeMap<String, BenchmarkReport>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroReport,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    benchmark: &'a str,
    group: String,
    metric: &'static str,
    value: f64,
}

pub fn build_report(records: &[PredictionRecord], bins: usize) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(RacError::validation("no prediction records to evaluate"));
    }
    if bins == 0 {
        return Err(RacError::validation("--bins must be at least 1"));
    }
    let mut grouped: BTreeMap<&str, BTreeMap<Level, Vec<&PredictionRecord>>> = BTreeMap::new();
    for r in records {
        let level = r.level().expect("validated on read");
        grouped.entry(&r.benchmark).or_default().entry(level).or_default().push(r);
    }

    let mut warnings = Vec::new();
    let mut benchmarks = BTreeMap::new();
    for (name, levels) in &grouped {
        let per_severity = levels
            .iter()
            .map(|(&l, rs)| Ok((l, report(&owned(rs), bins)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let all: Vec<PredictionRecord> = levels.values().flatten().map(|r| (*r).clone()).collect();
        let missing: Vec<String> = Level::ALL
            .iter()
            .filter(|l| !per_severity.contains_key(l))
            .map(Level::to_string)
            .collect();
        let bands = if missing.is_empty() {
            Some(band_aggregate(&per_severity)?)
        } else {
            warnings.push(format!(
                "benchmark {name}: missing severities {}; banded metrics omitted",
                missing.join(", ")
            ));
            None
        };
        benchmarks.insert(
            name.to_string(),
            BenchmarkReport {
                overall: report(&all, bins)?,
                per_severity,
                bands,
            },
        );
    }

    let banded = benchmarks.values().all(|b| b.bands.is_some());
    let bands = if banded {
        let per: BTreeMap<String, BandedReport> = benchmarks
            .iter()
            .map(|(k, b)| (k.clone(), b.bands.expect("checked above")))
            .collect();
        Some(macro_average(&per)?)
    } else {
        None
    };
    let k = benchmarks.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| benchmarks.values().map(|b| f(&b.overall)).sum::<f64>() / k;
    let overall = Headline {
        accuracy: mean(|r| r.accuracy),
        brier: mean(|r| r.brier),
        ece: mean(|r| r.ece),
    };
    Ok(EvalReport {
        bins,
        n: records.len(),
        banded,
        warnings,
        macro_avg: MacroReport { overall, bands },
        benchmarks,
    })
}

fn owned(rs: &[&PredictionRecord]) -> Vec<PredictionRecord> {
    rs.iter().map(|r| (*r).clone()).collect()
}

fn severity_label(level: Level) -> String {
    format!("{:.1}", level.severity())
}

fn push_headline<'a>(rows: &mut Vec<CsvRow<'a>>, bench: &'a str, group: String, r: &MetricsReport) {
    for (metric, value) in [
        ("n", r.n as f64),
        ("accuracy", r.accuracy),
        ("brier", r.brier),
        ("ece", r.ece),
    ] {
        rows.push(CsvRow { benchmark: bench, group: group.clone(), metric, value });
    }
}

fn push_banded<'a>(rows: &mut Vec<CsvRow<'a>>, bench: &'a str, b: &BandedReport) {
    for (metric, bands) in [("accuracy", &b.accuracy), ("brier", &b.brier), ("ece", &b.ece)] {
        for (band, value) in bands.named() {
            rows.push(CsvRow { benchmark: bench, group: band.into(), metric, value });
        }
    }
}

/// Flat rows: per severity, pooled ("all"), then bands; macro rows last.
fn csv_rows(rep: &EvalReport) -> Vec<CsvRow<'_>> {
    let mut rows = Vec::new();
    for (name, b) in &rep.benchmarks {
        for (&level, r) in &b.per_severity {
            push_headline(&mut rows, name, severity_label(level), r);
        }
        push_headline(&mut rows, name, "all".into(), &b.overall);
        if let Some(bands) = &b.bands {
            push_banded(&mut rows, name, bands);
        }
    }
    let m = &rep.macro_avg;
    for (metric, value) in [("accuracy", m.overall.accuracy), ("brier", m.overall.brier), ("ece", m.overall.ece)] {
        rows.push(CsvRow { benchmark: "macro", group: "all".into(), metric, value });
    }
    if let Some(bands) = &m.bands {
        push_banded(&mut rows, "macro", bands);
    }
    rows
}

pub fn run(args: &EvalArgs, force: bool) -> Result<EvalReport> {
    let json_path = args.out.join("report.json");
    let csv_path = args.out.join("metrics.csv");
    prepare_outputs([&json_path, &csv_path], force)?;
    let records: Vec<PredictionRecord> = read_jsonl::<PredictionLine>(&args.predictions)?
        .into_iter()
        .map(|(line, p)| {
            let r = PredictionRecord {
                benchmark: p.benchmark.unwrap_or_else(|| args.benchmark.clone()),
                severity: p.severity,
                c: p.c,
                a: p.a,
            };
            r.validate().map_err(|e| {
                RacError::validation(format!("{} line {line}: {e}", args.predictions.display()))
            })?;
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let rep = build_report(&records, args.bins)?;
    write_json_pretty(&json_path, &rep)?;
    write_csv(&csv_path, csv_rows(&rep))?;
    Ok(rep)
}
