//! `eval`: metric reports for decode files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use pomo_core::eval_metrics::{full_report, BucketBy, EvalPair};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::load_parts;
use crate::{emit_json, Run};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    /// Reference post-modifier length.
    Pm,
    /// Sentence length with the reference in place.
    Sent,
}

impl From<Bucket> for BucketBy {
    fn from(b: Bucket) -> Self {
        match b {
            Bucket::Pm => BucketBy::PmLength,
            Bucket::Sent => BucketBy::SentenceLength,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Decode JSONL with id and prediction fields.
    #[arg(long)]
    pred: PathBuf,
    /// Instance file (or split directory) holding the referenced ids.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "pm")]
    bucket: Bucket,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct PredLine {
    id: String,
    prediction: String,
}

pub fn eval(run: &Run, args: EvalArgs) -> Result<()> {
    let pred_path = run.input(&args.pred)?;
    let data_path = run.input(&args.data)?;
    let instances: HashMap<String, (String, String)> = load_parts(&data_path)?
        .into_iter()
        .flat_map(|(_, p)| p)
        .map(|i| (i.id, (i.pm_target, i.sent_with_slot)))
        .collect();
    let f = File::open(&pred_path).with_context(|| format!("opening {}", pred_path.display()))?;
    let mut pairs = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad decode line", pred_path.display(), n + 1))?;
        let Some((target, sent)) = instances.get(&p.id) else {
            bail!(
                "{}:{}: id {:?} is not in {}",
                pred_path.display(),
                n + 1,
                p.id,
                data_path.display()
            );
        };
        pairs.push(EvalPair {
            prediction: p.prediction,
            target: target.clone(),
            sent_with_slot: sent.clone(),
        });
    }
    let report = full_report(&pairs, args.bucket.into());
    emit_json(&report, args.out.as_deref())?;
    if let Some(out) = &args.out {
        run.manifest(
            "eval",
            &json!({ "bucket": args.bucket }),
            &[&pred_path, &data_path],
            &[out],
        )?;
    }
    Ok(())
}
