use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rac_core::corruption::{
    apply_corruption, encode_jpeg, load_rgb, make_training_pair, severity_params, MixtureConfig, Operator,
    SeverityParams, TrainingPair,
};
use rac_core::{Level, RacError, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::SeverityArgs;
use crate::io::{prepare_outputs, read_jsonl, write_jsonl};

#[derive(Debug, Args)]
pub struct CorruptArgs {
    /// Sample manifest JSONL: {sample_id, image_path, question, options, gold_letter}.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for images/, pairs.jsonl and errors.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub severity: SeverityArgs,
}

#[derive(Debug, Deserialize)]
struct ManifestRecord {
    sample_id: String,
    image_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub sample_id: String,
    pub branch: &'static str,
    pub image_path_out: PathBuf,
    pub operator: Option<Operator>,
    pub level: Level,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct ErrorEntry {
    line: usize,
    sample_id: String,
    exit_code: i32,
    error: String,
}

/// Outcome of a batch: rows written and the exit code of the first failed
/// record, if any.
pub struct CorruptOutcome {
    pub pairs: usize,
    pub failure_code: Option<i32>,
}

fn check_sample_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && !id.contains(['/', '\\'])
        && !id.chars().any(char::is_control);
    if ok {
        Ok(())
    } else {
        Err(RacError::validation(format!("sample_id {id:?} cannot be used as a file name")))
    }
}

fn process(
    rec: &ManifestRecord,
    base: &Path,
    images_dir: &Path,
    mix: &MixtureConfig,
    fixed: Option<Level>,
    seed: u64,
) -> Result<[PairRow; 2]> {
    check_sample_id(&rec.sample_id)?;
    let source = base.join(&rec.image_path);
    let TrainingPair { branch_a, branch_b, .. } = make_training_pair(&rec.sample_id, &source, mix, fixed, seed)?;
    let img = load_rgb(&source)?;
    let spec = branch_a.spec;
    let out_path = match severity_params(spec.operator, spec.level) {
        // Keep the real JPEG bytestream rather than a lossless re-encode.
        SeverityParams::JpegQuality(q) => {
            let p = images_dir.join(format!("{}_A.jpg", rec.sample_id));
            fs::write(&p, encode_jpeg(&img, q)?).map_err(|e| RacError::io(&p, e))?;
            p
        }
        _ => {
            let p = images_dir.join(format!("{}_A.png", rec.sample_id));
            apply_corruption(&img, &spec)?.save(&p).map_err(|e| RacError::Image {
                path: p.clone(),
                message: e.to_string(),
            })?;
            p
        }
    };
    Ok([
        PairRow {
            sample_id: rec.sample_id.clone(),
            branch: "A",
            image_path_out: out_path,
            operator: Some(spec.operator),
            level: spec.level,
            seed: spec.seed,
        },
        PairRow {
            sample_id: rec.sample_id.clone(),
            branch: "B",
            image_path_out: branch_b.image_ref,
            operator: None,
            level: branch_b.spec.level,
            seed: branch_b.spec.seed,
        },
    ])
}

pub fn run(args: &CorruptArgs, seed: u64, force: bool) -> Result<CorruptOutcome> {
    args.severity.validate()?;
    let mix = args.severity.mixture.clone().unwrap_or_default();
    mix.validate()?;
    let pairs_path = args.out.join("pairs.jsonl");
    let errors_path = args.out.join("errors.jsonl");
    let images_dir = args.out.join("images");
    let records = read_jsonl::<ManifestRecord>(&args.manifest)?;
    let image_paths: Vec<PathBuf> = records
        .iter()
        .flat_map(|(_, r)| ["png", "jpg"].map(|ext| images_dir.join(format!("{}_A.{ext}", r.sample_id))))
        .collect();
    prepare_outputs([&pairs_path, &errors_path].into_iter().chain(&image_paths), force)?;
    fs::create_dir_all(&images_dir).map_err(|e| RacError::io(&images_dir, e))?;

    let base = args.manifest.parent().unwrap_or(Path::new(""));
    let mut seen = HashSet::new();
    let duplicate: Vec<bool> = records.iter().map(|(_, r)| !seen.insert(r.sample_id.as_str())).collect();
    let results: Vec<Result<[PairRow; 2]>> = records
        .par_iter()
        .zip(&duplicate)
        .map(|((_, rec), &dup)| {
            if dup {
                return Err(RacError::validation(format!("duplicate sample_id {}", rec.sample_id)));
            }
            process(rec, base, &images_dir, &mix, args.severity.severity, seed)
        })
        .collect();

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for ((line, rec), res) in records.iter().zip(results) {
        match res {
            Ok(pair) => rows.extend(pair),
            Err(e) => errors.push(ErrorEntry {
                line: *line,
                sample_id: rec.sample_id.clone(),
                exit_code: e.exit_code(),
                error: e.to_string(),
            }),
        }
    }
    write_jsonl(&pairs_path, &rows)?;
    write_jsonl(&errors_path, &errors)?;
    for e in &errors {
        eprintln!("error: {} line {}: {}", args.manifest.display(), e.line, e.error);
    }
    Ok(CorruptOutcome {
        pairs: rows.len() / 2,
        failure_code: errors.first().map(|e| e.exit_code),
    })
}
