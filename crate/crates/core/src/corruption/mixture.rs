//! Severity mixture, operator sampling and clean/corrupted training pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorruptionSpec, Operator};
use crate::error::{ensure, RacError, Result};
use crate::severity::Level;

/// Probability of each corrupted level in the training stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixtureConfig {
    pub weights: BTreeMap<Level, f64>,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            weights: BTreeMap::from([(Level::T02, 0.5), (Level::T04, 0.4), (Level::T06, 0.1)]),
        }
    }
}

impl MixtureConfig {
    pub fn point(level: Level) -> Self {
        Self {
            weights: BTreeMap::from([(level, 1.0)]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(!self.weights.is_empty(), || "severity mixture is empty".into())?;
        ensure(!self.weights.contains_key(&Level::Clean), || {
            "severity mixture may only contain corrupted levels".into()
        })?;
        for (level, w) in &self.weights {
            ensure(w.is_finite() && *w >= 0.0, || {
                format!("mixture weight for {level} must be nonnegative, got {w}")
            })?;
        }
        let total: f64 = self.weights.values().sum();
        ensure((total - 1.0).abs() <= 1e-9, || {
            format!("mixture weights sum to {total}, expected 1")
        })
    }
}

impl FromStr for MixtureConfig {
    type Err = RacError;

    /// `"0.5:T0.2,0.4:T0.4,0.1:T0.6"`
    fn from_str(s: &str) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (w, level) = part.split_once(':').ok_or_else(|| {
                RacError::validation(format!("mixture entry {part:?} is not weight:level"))
            })?;
            let w: f64 = w.trim().parse().map_err(|_| {
                RacError::validation(format!("mixture weight {w:?} is not a number"))
            })?;
            let level: Level = level.parse()?;
            if weights.insert(level, w).is_some() {
                return Err(RacError::validation(format!("level {level} listed twice in mixture")));
            }
        }
        let mix = MixtureConfig { weights };
        mix.validate()?;
        Ok(mix)
    }
}

impl fmt::Display for MixtureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.weights.iter().map(|(l, w)| format!("{w}:{l}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Draw a level according to the mixture weights.
pub fn sample_severity<R: Rng + ?Sized>(mix: &MixtureConfig, rng: &mut R) -> Level {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = Level::T02;
    for (&level, &w) in &mix.weights {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = level;
        if u < acc {
            return level;
        }
    }
    last
}

pub fn sample_operator<R: Rng + ?Sized>(rng: &mut R) -> Operator {
    Operator::ALL[rng.random_range(0..Operator::ALL.len())]
}

/// Stable 64-bit seed for one sample and branch: the first eight bytes of
/// SHA-256 over the base seed, sample id and branch tag.
pub fn derive_seed(base_seed: u64, sample_id: &str, branch: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update((sample_id.len() as u64).to_le_bytes());
    h.update(sample_id.as_bytes());
    h.update(branch.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBranch {
    pub image_ref: PathBuf,
    pub spec: CorruptionSpec,
}

/// Matched branches of one training sample: A is corrupted, B is clean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub sample_id: String,
    pub branch_a: PairBranch,
    pub branch_b: PairBranch,
}

/// Build the pair for one sample. Operator, level and corruption seed come
/// from an RNG seeded by `(base_seed, sample_id)` so the result does not
/// depend on processing order. `fixed_level` overrides the mixture.
pub fn make_training_pair(
    sample_id: &str,
    image_ref: &Path,
    mix: &MixtureConfig,
    fixed_level: Option<Level>,
    base_seed: u64,
) -> Result<TrainingPair> {
    image::image_dimensions(image_ref).map_err(|e| RacError::Image {
        path: image_ref.to_path_buf(),
        message: e.to_string(),
    })?;
    mix.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, sample_id, "A"));
    let operator = sample_operator(&mut rng);
    let drawn = sample_severity(mix, &mut rng);
    let level = fixed_level.unwrap_or(drawn);
    let seed: u64 = rng.random();
    Ok(TrainingPair {
        sample_id: sample_id.to_string(),
        branch_a: PairBranch {
            image_ref: image_ref.to_path_buf(),
            spec: CorruptionSpec { operator, level, seed },
        },
        branch_b: PairBranch {
            image_ref: image_ref.to_path_buf(),
            spec: CorruptionSpec {
                operator,
                level: Level::Clean,
                seed: derive_seed(base_seed, sample_id, "B"),
            },
        },
    })
}
