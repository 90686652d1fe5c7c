//! Runs the `pomo` binary over the bundled fixtures.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_pomo");

/// Micro models so that the whole pipeline runs in well under a second.
pub const MICRO_CONFIG: &str = "\
# micro models for the fixture pipeline
split.ratios = 0.34,0.33,0.33
select.hidden = 16
select.embedding_dim = 8
select.layers = 1
select.epochs = 3
gen.hidden = 16
gen.embedding_dim = 8
gen.layers = 1
gen.eval_every = 10
gen.beam_width = 2
";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Runs `pomo` in `dir` with the given arguments.
pub fn pomo(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env_remove("POMO_DATA_DIR")
        .env_remove("RUST_LOG")
        .output()
        .expect("pomo runs")
}

/// Runs `pomo` and panics with its stderr on failure.
pub fn pomo_ok(dir: &Path, args: &[&str]) -> Output {
    let out = pomo(dir, args);
    assert!(
        out.status.success(),
        "pomo {} failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every stage of the fixture pipeline, run inside `dir` with relative
/// paths so that manifests from different directories are comparable.
/// Returns the stage outputs in order.
pub fn run_pipeline(dir: &Path, seed: u64, jobs: usize) -> Vec<PathBuf> {
    let fx = fixtures();
    fs::create_dir_all(dir).unwrap();
    for f in ["corpus.jsonl", "kb.jsonl"] {
        fs::copy(fx.join(f), dir.join(f)).unwrap();
    }
    fs::write(dir.join("micro.conf"), MICRO_CONFIG).unwrap();
    let seed = seed.to_string();
    let jobs = jobs.to_string();
    let common = [
        "--seed",
        seed.as_str(),
        "--jobs",
        jobs.as_str(),
        "--config",
        "micro.conf",
        "-q",
    ];
    let stages: [&[&str]; 12] = [
        &[
            "ingest-validate",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "validate.json",
        ],
        &[
            "extract",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "cands.jsonl",
        ],
        &[
            "build-dataset",
            "--candidates",
            "cands.jsonl",
            "--kb",
            "kb.jsonl",
            "--out",
            "instances.jsonl",
        ],
        &["split", "--instances", "instances.jsonl", "--out", "split"],
        &["stats", "--data", "split", "--out", "stats.json"],
        &[
            "select", "train", "--data", "split", "--mode", "mcc", "--out", "mcc.json",
        ],
        &["select", "train", "--data", "split", "--out", "ranker.ckpt"],
        &[
            "select",
            "eval",
            "--data",
            "split",
            "--model",
            "ranker.ckpt",
            "--out",
            "select_eval.json",
        ],
        &[
            "select",
            "sweep",
            "--data",
            "split",
            "--model",
            "mcc.json",
            "--max-n",
            "4",
            "--out",
            "sweep.json",
        ],
        &[
            "gen",
            "train",
            "--data",
            "split",
            "--arch",
            "tri",
            "--claims",
            "ranker:2",
            "--selector",
            "ranker.ckpt",
            "--steps",
            "20",
            "--out",
            "gen.ckpt",
        ],
        &[
            "gen",
            "decode",
            "--data",
            "split",
            "--model",
            "gen.ckpt",
            "--selector",
            "ranker.ckpt",
            "--mode",
            "beam",
            "--out",
            "decode.jsonl",
        ],
        &[
            "eval",
            "--pred",
            "decode.jsonl",
            "--data",
            "split",
            "--bucket",
            "sent",
            "--out",
            "eval.json",
        ],
    ];
    for stage in stages {
        let args: Vec<&str> = common.iter().chain(stage.iter()).copied().collect();
        pomo_ok(dir, &args);
    }
    [
        "validate.json",
        "cands.jsonl",
        "instances.jsonl",
        "split/train.jsonl",
        "split/valid.jsonl",
        "split/test.jsonl",
        "stats.json",
        "mcc.json",
        "ranker.ckpt",
        "ranker.ckpt.txt",
        "ranker.ckpt.log.json",
        "select_eval.json",
        "sweep.json",
        "gen.ckpt",
        "gen.ckpt.txt",
        "gen.ckpt.log.json",
        "decode.jsonl",
        "eval.json",
    ]
    .iter()
    .map(|p| dir.join(p))
    .collect()
}

/// Manifests written by [`run_pipeline`].
pub fn manifests(dir: &Path) -> Vec<PathBuf> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p
                .file_name()
                .unwrap()
                .to_string_lossy()
                .ends_with("manifest.json")
            {
                found.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    found.sort();
    found
}

/// A manifest with its wall-clock field removed.
pub fn manifest_without_time(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("created_unix");
    v
}
