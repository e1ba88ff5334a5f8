#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn rac() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rac"));
    cmd.env_remove("RAC_SEED");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    rac().args(args).output().expect("spawn rac")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn tests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

pub fn fixture(rel: &str) -> PathBuf {
    tests_dir().join("fixtures").join(rel)
}

pub fn golden(rel: &str) -> PathBuf {
    tests_dir().join("golden").join(rel)
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Files produced by the parse -> shape -> eval chain, relative to the
/// golden directory layout.
pub const PIPELINE_FILES: [&str; 5] = [
    "rollouts.jsonl",
    "shaped.jsonl",
    "shape_summary.json",
    "report.json",
    "metrics.csv",
];

/// Run the fixture chain into `dir`; returns the exit codes of the three
/// steps.
pub fn run_pipeline(dir: &Path) -> [i32; 3] {
    let rollouts = dir.join("rollouts.jsonl");
    let parse = run(&[
        "parse",
        "--completions",
        s(&fixture("pipeline/completions.jsonl")),
        "--prompts",
        s(&fixture("pipeline/prompts.jsonl")),
        "--out",
        s(&rollouts),
    ]);
    let shape = run(&["shape", "--rollouts", s(&rollouts), "--out", s(&dir.join("shaped.jsonl"))]);
    fs::write(dir.join("shape_summary.json"), &shape.stdout).unwrap();
    let eval = run(&[
        "eval",
        "--predictions",
        s(&rollouts),
        "--out",
        s(dir),
        "--benchmark",
        "fixture",
    ]);
    [code(&parse), code(&shape), code(&eval)]
}

/// Names of pipeline outputs that differ from the committed goldens.
pub fn golden_mismatches(dir: &Path) -> Vec<&'static str> {
    PIPELINE_FILES
        .into_iter()
        .filter(|f| {
            let got = fs::read(dir.join(f)).unwrap_or_default();
            let want = fs::read(golden(&format!("pipeline/{f}"))).expect("golden file");
            got != want
        })
        .collect()
}

pub fn write_jsonl(path: &Path, lines: &[serde_json::Value]) {
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).unwrap();
}

pub fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}
