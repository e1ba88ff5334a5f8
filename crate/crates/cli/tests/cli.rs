mod common;

use std::fs;
use std::path::Path;

use common::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn prompt(id: &str, gold: &str) -> Value {
    json!({
        "prompt_id": id,
        "question": "Which option?",
        "options": [{"letter": "A", "text": "a"}, {"letter": "B", "text": "b"}, {"letter": "C", "text": "c"}],
        "gold_letter": gold,
    })
}

fn completion(id: &str, branch: &str, slot: u32, severity: f64, text: &str) -> Value {
    json!({"prompt_id": id, "branch": branch, "slot": slot, "severity": severity, "completion": text})
}

const GOOD_B: &str = "<think>t</think>\n<answer>B</answer>\n<confidence>0.7</confidence>";

#[test]
fn pipeline_reproduces_goldens() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_pipeline(dir.path()), [0, 0, 0]);
    assert!(golden_mismatches(dir.path()).is_empty(), "{:?}", golden_mismatches(dir.path()));
}

#[test]
fn parse_sets_format_bit() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_jsonl(&p.join("prompts.jsonl"), &[prompt("q", "B")]);
    write_jsonl(
        &p.join("c.jsonl"),
        &[
            completion("q", "clean", 1, 0.0, GOOD_B),
            completion("q", "clean", 2, 0.0, &format!("Sure! {GOOD_B}")),
        ],
    );
    let out = run(&[
        "parse", "--completions", s(&p.join("c.jsonl")), "--prompts", s(&p.join("prompts.jsonl")),
        "--out", s(&p.join("r.jsonl")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_jsonl(&p.join("r.jsonl"));
    assert_eq!((rows[0]["f"].as_u64(), rows[0]["a"].as_u64(), rows[0]["c"].as_f64()), (Some(1), Some(1), Some(0.7)));
    assert_eq!((rows[1]["f"].as_u64(), rows[1]["a"].as_u64(), rows[1]["c"].as_f64()), (Some(0), Some(1), Some(0.0)));
}

#[test]
fn parse_rejects_duplicate_keys() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_jsonl(&p.join("prompts.jsonl"), &[prompt("q", "B")]);
    write_jsonl(
        &p.join("c.jsonl"),
        &[completion("q", "clean", 1, 0.0, GOOD_B), completion("q", "clean", 1, 0.0, GOOD_B)],
    );
    let out = run(&[
        "parse", "--completions", s(&p.join("c.jsonl")), "--prompts", s(&p.join("prompts.jsonl")),
        "--out", s(&p.join("r.jsonl")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("duplicate"), "{}", stderr(&out));
}

#[test]
fn parse_logs_unknown_prompts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_jsonl(&p.join("prompts.jsonl"), &[prompt("q", "B")]);
    write_jsonl(
        &p.join("c.jsonl"),
        &[completion("q", "clean", 1, 0.0, GOOD_B), completion("zz", "clean", 1, 0.0, GOOD_B)],
    );
    let out = run(&[
        "parse", "--completions", s(&p.join("c.jsonl")), "--prompts", s(&p.join("prompts.jsonl")),
        "--out", s(&p.join("r.jsonl")),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(read_jsonl(&p.join("r.jsonl")).len(), 1);
    let errors = read_jsonl(&p.join("r.jsonl.errors.jsonl"));
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0]["prompt_id"], "zz");
    assert_eq!(errors[0]["line"], 2);
}

#[test]
fn shape_vanilla_totals_equal_task_reward() {
    let dir = tempfile::tempdir().unwrap();
    let shaped = dir.path().join("shaped.jsonl");
    let out = run(&[
        "shape", "--rollouts", s(&golden("pipeline/rollouts.jsonl")), "--out", s(&shaped),
        "--lambda-rank", "0", "--lambda-corr", "0", "--lambda-fmt-start", "0", "--lambda-fmt-end", "0",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_jsonl(&shaped);
    assert_eq!(rows.len(), 40);
    for r in rows {
        assert_eq!(r["total"], r["r_task"]);
    }
}

#[test]
fn shape_step_fraction_moves_format_weight() {
    let dir = tempfile::tempdir().unwrap();
    let shaped = dir.path().join("shaped.jsonl");
    let out = run(&[
        "shape", "--rollouts", s(&golden("pipeline/rollouts.jsonl")), "--out", s(&shaped),
        "--step-fraction", "1",
    ]);
    assert_eq!(code(&out), 0);
    assert!(read_jsonl(&shaped).iter().all(|r| r["lambda_fmt"] == 0.3));
}

#[test]
fn shape_names_incomplete_group() {
    let dir = tempfile::tempdir().unwrap();
    let rollouts: Vec<Value> = read_jsonl(&golden("pipeline/rollouts.jsonl"))
        .into_iter()
        .filter(|r| !(r["prompt_id"] == "p3" && r["branch"] == "corrupted" && r["slot"] == 2))
        .collect();
    let input = dir.path().join("r.jsonl");
    write_jsonl(&input, &rollouts);
    let out = run(&["shape", "--rollouts", s(&input), "--out", s(&dir.path().join("o.jsonl"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("p3"), "{}", stderr(&out));
}

#[test]
fn shape_reports_malformed_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(golden("pipeline/rollouts.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[6] = "{\"rollout_id\": ";
    let input = dir.path().join("r.jsonl");
    fs::write(&input, lines.join("\n")).unwrap();
    let out = run(&["shape", "--rollouts", s(&input), "--out", s(&dir.path().join("o.jsonl"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 7"), "{}", stderr(&out));
}

fn predictions(levels: &[f64]) -> Vec<Value> {
    levels
        .iter()
        .flat_map(|&s| {
            [
                json!({"benchmark": "b1", "severity": s, "c": 0.9, "a": 1}),
                json!({"benchmark": "b1", "severity": s, "c": 0.55, "a": 0}),
            ]
        })
        .collect()
}

#[test]
fn eval_degrades_without_all_severities() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.jsonl");
    write_jsonl(&input, &predictions(&[0.0, 0.2, 0.4, 0.6, 1.0]));
    let out = run(&["eval", "--predictions", s(&input), "--out", s(&dir.path().join("e"))]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("warning") && stderr(&out).contains("T0.8"));
    let rep: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("e/report.json")).unwrap()).unwrap();
    assert_eq!(rep["banded"], false);
    assert!(rep["macro"]["bands"].is_null());
}

#[test]
fn eval_single_benchmark_macro_matches() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.jsonl");
    write_jsonl(&input, &predictions(&[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]));
    let out = run(&["eval", "--predictions", s(&input), "--out", s(&dir.path().join("e")), "--bins", "5"]);
    assert_eq!(code(&out), 0);
    let rep: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("e/report.json")).unwrap()).unwrap();
    assert_eq!(rep["macro"]["bands"], rep["benchmarks"]["b1"]["bands"]);
    // Every level: a correct 0.9 (gap 0.1) and a wrong 0.55 (gap 0.55) in
    // separate bins, so ECE = (0.1 + 0.55) / 2.
    assert_eq!(rep["macro"]["bands"]["ece"]["avg"], json!(0.325));
}

#[test]
fn eval_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.jsonl");
    fs::write(&input, "\n").unwrap();
    let out = run(&["eval", "--predictions", s(&input), "--out", s(&dir.path().join("e"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn outputs_need_force_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let shaped = dir.path().join("deep/nested/shaped.jsonl");
    let input = golden("pipeline/rollouts.jsonl");
    let args = ["shape", "--rollouts", s(&input), "--out", s(&shaped)];
    assert_eq!(code(&run(&args)), 0);
    let again = run(&args);
    assert_eq!(code(&again), 2);
    assert!(stderr(&again).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&run(&forced)), 0);
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["shape", "--rollouts", "/nonexistent/r.jsonl", "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_flags_are_validation_errors() {
    assert_eq!(code(&run(&["shape", "--rollouts"])), 1);
    assert_eq!(code(&run(&["simulate", "--out", "x", "--sweep", "gamma=1"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

fn write_images(dir: &Path, count: usize) -> Vec<Value> {
    (0..count)
        .map(|i| {
            let img = image::RgbImage::from_fn(24, 16, |x, y| {
                image::Rgb([(x * 10 + i as u32 * 7) as u8, (y * 15) as u8, ((x + y) * 5) as u8])
            });
            let name = format!("img{i}.png");
            img.save(dir.join(&name)).unwrap();
            json!({
                "sample_id": format!("s{i}"),
                "image_path": name,
                "question": "What is shown?",
                "options": [{"letter": "A", "text": "x"}, {"letter": "B", "text": "y"}],
                "gold_letter": "A",
            })
        })
        .collect()
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

#[test]
fn corrupt_builds_pairs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let manifest = p.join("manifest.jsonl");
    write_jsonl(&manifest, &write_images(p, 12));
    let corrupt = |out: &str, extra: &[&str]| {
        let mut args = vec!["corrupt", "--manifest", s(&manifest), "--out", out, "--seed", "7"];
        args.extend_from_slice(extra);
        run(&args)
    };
    let a = p.join("a");
    let b = p.join("b");
    assert_eq!(code(&corrupt(s(&a), &[])), 0);
    assert_eq!(code(&corrupt(s(&b), &[])), 0);

    let rows = read_jsonl(&a.join("pairs.jsonl"));
    assert_eq!(rows.len(), 24);
    for pair in rows.chunks(2) {
        assert_eq!((pair[0]["branch"].as_str(), pair[1]["branch"].as_str()), (Some("A"), Some("B")));
        assert!(pair[1]["operator"].is_null());
        assert_eq!(pair[1]["level"], "CLEAN");
        assert!(pair[1]["image_path_out"].as_str().unwrap().ends_with(".png"));
        let out_a = Path::new(pair[0]["image_path_out"].as_str().unwrap());
        assert!(out_a.exists());
        let other = b.join("images").join(out_a.file_name().unwrap());
        assert_eq!(sha(out_a), sha(&other));
        assert!(["T0.2", "T0.4", "T0.6"].contains(&pair[0]["level"].as_str().unwrap()));
    }
    let strip = |rows: Vec<Value>| -> Vec<Value> {
        rows.into_iter()
            .map(|mut r| {
                r.as_object_mut().unwrap().remove("image_path_out");
                r
            })
            .collect()
    };
    assert_eq!(strip(rows), strip(read_jsonl(&b.join("pairs.jsonl"))));
    assert!(read_jsonl(&a.join("errors.jsonl")).is_empty());

    let fixed = p.join("fixed");
    assert_eq!(code(&corrupt(s(&fixed), &["--severity", "T0.8"])), 0);
    let rows = read_jsonl(&fixed.join("pairs.jsonl"));
    assert!(rows.iter().filter(|r| r["branch"] == "A").all(|r| r["level"] == "T0.8"));
}

#[test]
fn corrupt_logs_missing_images() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut manifest = write_images(p, 2);
    manifest.push(json!({"sample_id": "gone", "image_path": "missing.png"}));
    write_jsonl(&p.join("m.jsonl"), &manifest);
    let out = run(&["corrupt", "--manifest", s(&p.join("m.jsonl")), "--out", s(&p.join("o"))]);
    assert_eq!(code(&out), 2);
    assert_eq!(read_jsonl(&p.join("o/pairs.jsonl")).len(), 4);
    let errors = read_jsonl(&p.join("o/errors.jsonl"));
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0]["sample_id"], "gone");
}

const TINY: &[&str] = &[
    "--iterations", "4", "--prompts-per-iter", "4", "--n", "4", "--eval-questions", "12", "--eval-every", "2",
];

fn simulate(out: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["simulate", "--out", s(out)];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn simulate_ablation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(&dir.path().join("a"), &["--ablation", "--seed", "3"]);
    let b = simulate(&dir.path().join("b"), &["--ablation", "--seed", "3"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let table = String::from_utf8(a.stdout).unwrap();
    for label in ["Vanilla-RL", "+Pair ", "+Rank", "+Pair+Rank"] {
        assert!(table.contains(label), "{table}");
    }
    for run in ["vanilla-rl", "pair", "rank", "pair-rank"] {
        for f in ["report.json", "iterations.csv", "evals.csv"] {
            let fa = fs::read(dir.path().join("a").join(run).join(f)).unwrap();
            let fb = fs::read(dir.path().join("b").join(run).join(f)).unwrap();
            assert_eq!(fa, fb, "{run}/{f}");
        }
    }
    assert_eq!(fs::read_to_string(dir.path().join("a/ablation.csv")).unwrap().lines().count(), 13);
}

#[test]
fn simulate_seed_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let flag = simulate(&dir.path().join("flag"), &["--seed", "11"]);
    let mut cmd = rac();
    cmd.env("RAC_SEED", "11").args(["simulate", "--out", s(&dir.path().join("env"))]).args(TINY);
    let env = cmd.output().unwrap();
    assert_eq!(code(&env), 0);
    assert_eq!(flag.stdout, env.stdout);
    let other = simulate(&dir.path().join("other"), &["--seed", "12"]);
    assert_ne!(flag.stdout, other.stdout);
}

#[test]
fn simulate_sweep_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(&dir.path().join("s"), &["--sweep", "lambda_corr", "--dump-records"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let frontier = fs::read_to_string(dir.path().join("s/frontier.csv")).unwrap();
    let values: Vec<&str> = frontier.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values, ["0.0", "0.2", "0.3", "0.4"]);
    let dump = read_jsonl(&dir.path().join("s/lambda_corr-0.2/shaped.jsonl"));
    // 4 iterations x 4 prompts x 2 branches x 4 slots.
    assert_eq!(dump.len(), 128);
}
