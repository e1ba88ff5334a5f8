//! JSONL/CSV file helpers shared by the subcommands.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rac_core::{RacError, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Parse a JSONL file, skipping blank lines. Each value comes back with its
/// 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = fs::read_to_string(path).map_err(|e| RacError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| RacError::Parse {
            line: idx + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

/// Create the parent directory of `path` and refuse to clobber an existing
/// file unless `force` is set.
pub fn prepare_output(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(RacError::io(
            path,
            io::Error::new(io::ErrorKind::AlreadyExists, "refusing to overwrite (pass --force)"),
        ));
    }
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| RacError::io(dir, e))
        }
        _ => Ok(()),
    }
}

/// Check every target up front so a refused overwrite leaves nothing
/// half-written.
pub fn prepare_outputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>, force: bool) -> Result<()> {
    paths.into_iter().try_for_each(|p| prepare_output(p, force))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| RacError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| RacError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| RacError::io(path, e))?;
    }
    w.flush().map_err(|e| RacError::io(path, e))
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| RacError::io(path, e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| RacError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let csv_err = |e: csv::Error| RacError::io(path, io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| RacError::io(path, e))
}
