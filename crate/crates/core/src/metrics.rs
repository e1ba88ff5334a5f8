//! Accuracy, Brier score and binned expected calibration error, plus
//! severity banding and macro-averaging across benchmarks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, RacError, Result};
use crate::severity::Level;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub benchmark: String,
    pub severity: f64,
    pub c: f64,
    pub a: u8,
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        ensure(self.c.is_finite() && (0.0..=1.0).contains(&self.c), || {
            format!("confidence {} outside [0, 1]", self.c)
        })?;
        ensure(self.a <= 1, || format!("correctness must be 0 or 1, got {}", self.a))?;
        ensure(Level::from_severity(self.severity).is_some(), || {
            format!("severity {} is not one of 0.0, 0.2, ..., 1.0", self.severity)
        })
    }

    pub fn level(&self) -> Option<Level> {
        Level::from_severity(self.severity)
    }
}

/// Anything carrying a confidence and a correctness bit.
pub trait Scored {
    fn confidence(&self) -> f64;
    fn correct(&self) -> u8;
}

impl Scored for PredictionRecord {
    fn confidence(&self) -> f64 {
        self.c
    }
    fn correct(&self) -> u8 {
        self.a
    }
}

impl Scored for (f64, u8) {
    fn confidence(&self) -> f64 {
        self.0
    }
    fn correct(&self) -> u8 {
        self.1
    }
}

fn nonempty<T>(records: &[T]) -> Result<()> {
    ensure(!records.is_empty(), || "metrics need at least one record".into())
}

pub fn accuracy<R: Scored>(records: &[R]) -> Result<f64> {
    nonempty(records)?;
    let hits: u64 = records.iter().map(|r| u64::from(r.correct())).sum();
    Ok(hits as f64 / records.len() as f64)
}

pub fn brier<R: Scored>(records: &[R]) -> Result<f64> {
    nonempty(records)?;
    let sum: f64 = records
        .iter()
        .map(|r| (r.confidence() - f64::from(r.correct())).powi(2))
        .sum();
    Ok(sum / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    /// 1-based bin index covering `((b - 1) / B, b / B]`.
    pub bin: usize,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub empirical_accuracy: Option<f64>,
}

/// 0-based bin for confidence `c` under `bins` equal-width half-open bins
/// `((b-1)/B, b/B]`; `c = 0` falls into the first bin.
pub fn bin_of(c: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut idx = (c * b).ceil().clamp(1.0, b) as usize;
    // Correct for rounding in `c * B` against the exact bin edges.
    while idx > 1 && c <= (idx - 1) as f64 / b {
        idx -= 1;
    }
    while idx < bins && c > idx as f64 / b {
        idx += 1;
    }
    idx - 1
}

/// Expected calibration error over `bins` equal-width bins, with the
/// per-bin reliability table.
pub fn ece<R: Scored>(records: &[R], bins: usize) -> Result<(f64, Vec<ReliabilityBin>)> {
    nonempty(records)?;
    ensure(bins >= 1, || "ECE needs at least one bin".into())?;
    let mut count = vec![0usize; bins];
    let mut sum_c = vec![0.0f64; bins];
    let mut sum_a = vec![0.0f64; bins];
    for r in records {
        let b = bin_of(r.confidence(), bins);
        count[b] += 1;
        sum_c[b] += r.confidence();
        sum_a[b] += f64::from(r.correct());
    }
    let n = records.len() as f64;
    let mut total = 0.0;
    let mut table = Vec::with_capacity(bins);
    for b in 0..bins {
        let k = count[b];
        let (conf, acc) = if k == 0 {
            (None, None)
        } else {
            let conf = sum_c[b] / k as f64;
            let acc = sum_a[b] / k as f64;
            total += k as f64 / n * (acc - conf).abs();
            (Some(conf), Some(acc))
        };
        table.push(ReliabilityBin {
            bin: b + 1,
            count: k,
            mean_confidence: conf,
            empirical_accuracy: acc,
        });
    }
    Ok((total, table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub brier: f64,
    pub ece: f64,
    pub bins: Vec<ReliabilityBin>,
}

pub fn report<R: Scored>(records: &[R], bins: usize) -> Result<MetricsReport> {
    let (ece_value, table) = ece(records, bins)?;
    Ok(MetricsReport {
        n: records.len(),
        accuracy: accuracy(records)?,
        brier: brier(records)?,
        ece: ece_value,
        bins: table,
    })
}

/// Clean / Mild / Severe band values and their unweighted mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub clean: f64,
    pub mild: f64,
    pub severe: f64,
    pub avg: f64,
}

impl Bands {
    fn from_levels(v: [f64; 6]) -> Self {
        let clean = v[0];
        let mild = (v[1] + v[2]) / 2.0;
        let severe = (v[3] + v[4] + v[5]) / 3.0;
        Bands {
            clean,
            mild,
            severe,
            avg: (clean + mild + severe) / 3.0,
        }
    }

    fn mean_of(items: &[Bands]) -> Bands {
        let n = items.len() as f64;
        let m = |f: fn(&Bands) -> f64| items.iter().map(f).sum::<f64>() / n;
        Bands {
            clean: m(|b| b.clean),
            mild: m(|b| b.mild),
            severe: m(|b| b.severe),
            avg: m(|b| b.avg),
        }
    }

    pub fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("clean", self.clean),
            ("mild", self.mild),
            ("severe", self.severe),
            ("avg", self.avg),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandedReport {
    pub accuracy: Bands,
    pub ece: Bands,
    pub brier: Bands,
}

/// Group six per-severity reports into Clean (T0.0), Mild (T0.2, T0.4) and
/// Severe (T0.6, T0.8, T1.0) bands.
pub fn band_aggregate(per_severity: &BTreeMap<Level, MetricsReport>) -> Result<BandedReport> {
    let mut acc = [0.0; 6];
    let mut ece = [0.0; 6];
    let mut brier = [0.0; 6];
    for level in Level::ALL {
        let r = per_severity.get(&level).ok_or_else(|| {
            RacError::validation(format!("missing severity {level} for banding"))
        })?;
        acc[level.index()] = r.accuracy;
        ece[level.index()] = r.ece;
        brier[level.index()] = r.brier;
    }
    Ok(BandedReport {
        accuracy: Bands::from_levels(acc),
        ece: Bands::from_levels(ece),
        brier: Bands::from_levels(brier),
    })
}

/// Unweighted mean of each banded metric across benchmarks.
pub fn macro_average(per_benchmark: &BTreeMap<String, BandedReport>) -> Result<BandedReport> {
    ensure(!per_benchmark.is_empty(), || {
        "macro-average needs at least one benchmark".into()
    })?;
    let pick = |f: fn(&BandedReport) -> Bands| {
        Bands::mean_of(&per_benchmark.values().map(f).collect::<Vec<_>>())
    };
    Ok(BandedReport {
        accuracy: pick(|r| r.accuracy),
        ece: pick(|r| r.ece),
        brier: pick(|r| r.brier),
    })
}
