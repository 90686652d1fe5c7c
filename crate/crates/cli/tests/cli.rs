mod common;

use std::fs;
use std::process::Command;

use common::{fixtures, manifests, pomo, pomo_ok, run_pipeline, BIN};
use pomo_core::dataset::{read_dataset, read_instances};
use pomo_core::extraction::read_candidates;
use serde_json::Value;

fn json(path: &std::path::Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn lines(path: &std::path::Path) -> usize {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .count()
}

#[test]
fn extract_reproduces_the_gold_candidates() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("corpus.jsonl");
    let out = tmp.path().join("cands.jsonl");
    pomo_ok(
        tmp.path(),
        &[
            "extract",
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
    );
    let got = read_candidates(&out).unwrap();
    let gold = read_candidates(&fixtures().join("gold_candidates.jsonl")).unwrap();
    assert_eq!(got, gold);
    assert!(tmp.path().join("cands.jsonl.manifest.json").exists());
}

#[test]
fn unknown_subcommands_and_flags_fail_with_usage() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["extract", "--bogus", "x"], &[]] {
        let out = pomo(tmp.path(), args);
        assert!(!out.status.success(), "{args:?} should fail");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("Usage"), "{args:?}: {err}");
    }
}

#[test]
fn help_lists_every_subcommand() {
    let out = pomo_ok(&std::env::temp_dir(), &["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "ingest-validate",
        "extract",
        "build-dataset",
        "split",
        "stats",
        "select",
        "gen",
        "eval",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn missing_inputs_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pomo(
        tmp.path(),
        &["extract", "--corpus", "nope.jsonl", "--out", "c.jsonl"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.jsonl"));
    assert!(!tmp.path().join("c.jsonl").exists());
}

#[test]
fn relative_inputs_fall_back_to_the_data_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .current_dir(tmp.path())
        .env("POMO_DATA_DIR", fixtures())
        .args(["ingest-validate", "--corpus", "corpus.jsonl"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["documents"], 8);
    assert_eq!(report["sentences"], 20);
    assert_eq!(report["errors"].as_array().unwrap().len(), 0);
}

#[test]
fn invalid_corpora_exit_nonzero_with_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let good = fs::read_to_string(fixtures().join("corpus.jsonl")).unwrap();
    let first = good.lines().next().unwrap();
    // A head index past the end of its sentence.
    let broken = first.replacen("\"head\": 0", "\"head\": 999", 1);
    assert_ne!(broken, first, "fixture layout changed");
    fs::write(
        tmp.path().join("bad.jsonl"),
        format!("{broken}\n{}", good.lines().nth(1).unwrap()),
    )
    .unwrap();
    let out = pomo(
        tmp.path(),
        &[
            "ingest-validate",
            "--corpus",
            "bad.jsonl",
            "--out",
            "report.json",
        ],
    );
    assert!(!out.status.success());
    let report = json(&tmp.path().join("report.json"));
    assert_eq!(report["documents"], 1);
    assert_eq!(report["errors"].as_array().unwrap().len(), 1);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::copy(
        fixtures().join("gold_candidates.jsonl"),
        dir.join("cands.jsonl"),
    )
    .unwrap();
    fs::copy(fixtures().join("kb.jsonl"), dir.join("kb.jsonl")).unwrap();
    fs::write(dir.join("strict.conf"), "link.threshold = 1.0\n").unwrap();
    let base = [
        "--config",
        "strict.conf",
        "build-dataset",
        "--candidates",
        "cands.jsonl",
        "--kb",
        "kb.jsonl",
    ];

    let args: Vec<&str> = base.iter().copied().chain(["--out", "a.jsonl"]).collect();
    pomo_ok(dir, &args);
    let from_file = read_instances(&dir.join("a.jsonl")).unwrap().len();

    let args: Vec<&str> = base
        .iter()
        .copied()
        .chain(["--out", "b.jsonl", "--threshold", "0.3"])
        .collect();
    pomo_ok(dir, &args);
    let from_flag = read_instances(&dir.join("b.jsonl")).unwrap().len();

    assert_eq!(from_flag, 7);
    assert!(from_file < from_flag, "threshold 1.0 kept {from_file}");
    let manifest = json(&dir.join("b.jsonl.manifest.json"));
    assert_eq!(manifest["config"]["threshold"], 0.3);
    let inputs: Vec<&str> = manifest["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["path"].as_str().unwrap())
        .collect();
    assert!(inputs.contains(&"strict.conf"), "{inputs:?}");
}

#[test]
fn bad_config_files_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.conf"), "link.treshold = 0.3\n").unwrap();
    let out = pomo(
        tmp.path(),
        &["--config", "bad.conf", "stats", "--data", "x"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("treshold"));
}

#[test]
fn ranker_generators_need_a_selector() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::copy(
        fixtures().join("gold_candidates.jsonl"),
        dir.join("cands.jsonl"),
    )
    .unwrap();
    fs::copy(fixtures().join("kb.jsonl"), dir.join("kb.jsonl")).unwrap();
    pomo_ok(
        dir,
        &[
            "build-dataset",
            "--candidates",
            "cands.jsonl",
            "--kb",
            "kb.jsonl",
            "--out",
            "i.jsonl",
        ],
    );
    pomo_ok(
        dir,
        &[
            "split",
            "--instances",
            "i.jsonl",
            "--out",
            "split",
            "--ratios",
            "0.34,0.33,0.33",
        ],
    );
    let out = pomo(
        dir,
        &[
            "gen", "train", "--data", "split", "--claims", "ranker:2", "--steps", "1", "--out",
            "g.ckpt",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--selector"));
}

#[test]
fn full_pipeline_produces_consistent_stage_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let outputs = run_pipeline(dir, 1, 1);
    for p in &outputs {
        assert!(p.exists(), "{} missing", p.display());
    }

    assert_eq!(json(&dir.join("validate.json"))["sentences"], 20);
    assert_eq!(lines(&dir.join("cands.jsonl")), 8);
    assert_eq!(lines(&dir.join("instances.jsonl")), 7);

    let split = read_dataset(&dir.join("split")).unwrap();
    let sizes = [split.train.len(), split.valid.len(), split.test.len()];
    assert_eq!(sizes.iter().sum::<usize>(), 7);
    assert!(sizes.iter().all(|&n| n > 0), "{sizes:?}");

    let stats = json(&dir.join("stats.json"));
    assert_eq!(stats["overall"]["instances"], 7);

    assert_eq!(json(&dir.join("mcc.json"))["kind"], "mcc");
    let sel = json(&dir.join("select_eval.json"));
    assert_eq!(sel["part"], "test");
    assert_eq!(sel["instances"], split.test.len());
    assert_eq!(json(&dir.join("sweep.json")).as_array().unwrap().len(), 4);

    assert_eq!(lines(&dir.join("decode.jsonl")), split.test.len());
    assert_eq!(json(&dir.join("eval.json"))["count"], split.test.len());

    // One manifest per command; split writes into its directory.
    let found = manifests(dir);
    assert_eq!(found.len(), 12, "{found:?}");
    assert!(found.iter().any(|p| p.ends_with("split/manifest.json")));
    let m = json(&dir.join("gen.ckpt.manifest.json"));
    let outs: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert_eq!(outs, ["gen.ckpt", "gen.ckpt.txt", "gen.ckpt.log.json"]);
    assert!(m["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|i| i["path"] == "ranker.ckpt"));

    // Bare "beam" takes the model's width; decoding is greedy otherwise.
    assert_eq!(
        json(&dir.join("decode.jsonl.manifest.json"))["config"]["mode"],
        "beam:2"
    );
    let args = [
        "gen",
        "decode",
        "--data",
        "split",
        "--model",
        "gen.ckpt",
        "--selector",
        "ranker.ckpt",
        "--out",
        "g.jsonl",
    ];
    pomo_ok(dir, &args);
    assert_eq!(
        json(&dir.join("g.jsonl.manifest.json"))["config"]["mode"],
        "greedy"
    );
}
