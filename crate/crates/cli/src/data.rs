//! Corpus validation, extraction, linking, splitting, and statistics.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use pomo_core::corpus_io::{load_parsed_corpus, ParsedDocument};
use pomo_core::dataset::{
    build_instances, dataset_stats, occupation_distribution, read_dataset, read_instances,
    split_dataset, write_dataset, write_instances_file, OccupationMap, PomoInstance,
    DEFAULT_RATIOS,
};
use pomo_core::extraction::{
    extract_from_corpus, read_candidates, write_candidates, ExtractOptions,
};
use pomo_core::kb_link::{load_kb, LinkConfig};
use serde::Serialize;
use serde_json::json;

use crate::{emit_json, prepare_output, Run};

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ValidationReport {
    documents: usize,
    sentences: usize,
    errors: Vec<String>,
}

pub fn validate(run: &Run, args: ValidateArgs) -> Result<()> {
    let corpus = run.input(&args.corpus)?;
    let mut report = ValidationReport {
        documents: 0,
        sentences: 0,
        errors: Vec::new(),
    };
    for doc in load_parsed_corpus(&corpus)? {
        match doc {
            Ok(d) => {
                report.documents += 1;
                report.sentences += d.sentences.len();
            }
            Err(e) => report.errors.push(e.to_string()),
        }
    }
    emit_json(&report, args.out.as_deref())?;
    if let Some(out) = &args.out {
        run.manifest("ingest-validate", &json!({}), &[&corpus], &[out])?;
    }
    if !report.errors.is_empty() {
        bail!(
            "{} invalid document(s) in {}",
            report.errors.len(),
            corpus.display()
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Skip sentences with more than one usable appositive instead of taking the leftmost.
    #[arg(long)]
    strict: bool,
}

pub fn extract(run: &Run, args: ExtractArgs) -> Result<()> {
    let corpus = run.input(&args.corpus)?;
    let strict = args.strict
        || run
            .settings
            .value::<bool>("extract.strict")?
            .unwrap_or(false);
    let docs: Vec<ParsedDocument> = load_parsed_corpus(&corpus)?.collect::<Result<_, _>>()?;
    let cands: Vec<_> =
        extract_from_corpus(docs.iter().cloned().map(Ok), ExtractOptions { strict })
            .collect::<Result<_, _>>()?;
    prepare_output(&args.out)?;
    let f = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_candidates(&cands, BufWriter::new(f))?;
    run.manifest(
        "extract",
        &json!({ "strict": strict }),
        &[&corpus],
        &[&args.out],
    )?;
    println!(
        "extracted {} candidates from {} documents",
        cands.len(),
        docs.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Minimum post-modifier coverage by relevant claims [default: 0.3].
    #[arg(long)]
    threshold: Option<f64>,
    /// Fraction of a claim value's content words that must appear [default: 0.5].
    #[arg(long)]
    rho: Option<f64>,
}

pub fn build(run: &Run, args: BuildArgs) -> Result<()> {
    let cands_path = run.input(&args.candidates)?;
    let kb_path = run.input(&args.kb)?;
    let defaults = LinkConfig::default();
    let cfg = LinkConfig {
        threshold: pick(
            args.threshold,
            run.settings.value("link.threshold")?,
            defaults.threshold,
        ),
        rho: pick(args.rho, run.settings.value("link.rho")?, defaults.rho),
    };
    if !(0.0..=1.0).contains(&cfg.threshold) || !(cfg.rho > 0.0 && cfg.rho <= 1.0) {
        bail!("threshold must be in [0, 1] and rho in (0, 1]");
    }
    let cands = read_candidates(&cands_path)?;
    let kb = load_kb(&kb_path)?;
    let (instances, counts) = build_instances(&cands, &kb, cfg);
    prepare_output(&args.out)?;
    write_instances_file(&instances, &args.out)?;
    let config = json!({ "threshold": cfg.threshold, "rho": cfg.rho });
    run.manifest(
        "build-dataset",
        &config,
        &[&cands_path, &kb_path],
        &[&args.out],
    )?;
    println!(
        "linked {} candidates, dropped {}",
        counts.linked, counts.dropped
    );
    Ok(())
}

/// Flag, else config file, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("ratios {s:?}"))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => bail!("ratios need three comma-separated values, got {s:?}"),
    }
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    instances: PathBuf,
    /// Output directory for train.jsonl, valid.jsonl, and test.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Train, valid, and test proportions [default: 0.955,0.0225,0.0225].
    #[arg(long)]
    ratios: Option<String>,
}

pub fn split(run: &Run, args: SplitArgs) -> Result<()> {
    let path = run.input(&args.instances)?;
    let ratios = match args.ratios.as_deref().or(run.settings.get("split.ratios")) {
        Some(s) => parse_ratios(s)?,
        None => DEFAULT_RATIOS,
    };
    let instances = read_instances(&path)?;
    let split = split_dataset(&instances, ratios, run.seed)?;
    write_dataset(&split, &args.out)?;
    let config = json!({ "ratios": [ratios.0, ratios.1, ratios.2] });
    run.manifest("split", &config, &[&path], &[&args.out])?;
    println!(
        "split {} / {} / {}",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// An instance file or a split directory.
    #[arg(long)]
    data: PathBuf,
    /// Occupation value to category mapping (value<TAB>category); the bundled one by default.
    #[arg(long)]
    occupations: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Instances of a file, or of every part of a split directory, with part names.
pub fn load_parts(path: &Path) -> Result<Vec<(String, Vec<PomoInstance>)>> {
    if path.is_dir() {
        let split = read_dataset(path)?;
        Ok(split
            .parts()
            .into_iter()
            .map(|(n, p)| (n.to_string(), p.clone()))
            .collect())
    } else {
        Ok(vec![("all".to_string(), read_instances(path)?)])
    }
}

pub fn stats(run: &Run, args: StatsArgs) -> Result<()> {
    let data = run.input(&args.data)?;
    let occ_path = args
        .occupations
        .as_deref()
        .map(|p| run.input(p))
        .transpose()?;
    let mapping = match &occ_path {
        Some(p) => OccupationMap::load(p)?,
        None => OccupationMap::builtin(),
    };
    let parts = load_parts(&data)?;
    let all: Vec<PomoInstance> = parts.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
    let per_part: serde_json::Map<String, serde_json::Value> = parts
        .iter()
        .map(|(n, p)| Ok((n.clone(), serde_json::to_value(dataset_stats(p))?)))
        .collect::<Result<_>>()?;
    let report = json!({
        "overall": dataset_stats(&all),
        "parts": per_part,
        "occupations": occupation_distribution(&all, &mapping),
    });
    emit_json(&report, args.out.as_deref())?;
    if let Some(out) = &args.out {
        let mut inputs: Vec<&Path> = vec![&data];
        inputs.extend(occ_path.as_deref());
        run.manifest("stats", &json!({}), &inputs, &[out])?;
    }
    Ok(())
}
