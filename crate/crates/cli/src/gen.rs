//! `gen train|decode|eval`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use pomo_core::checkpoint::sidecar_path;
use pomo_core::dataset::{read_dataset, PomoInstance};
use pomo_core::eval_metrics::{full_report, EvalPair};
use pomo_core::generation::{
    decode_batch, prepare_examples, train_generator, Architecture, ClaimSource, DecodeMode,
    GenExample, GenModel, GenModelConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::eval::Bucket;
use crate::select::{part, with_suffix, Selector};
use crate::settings::{apply_overrides, split_assignment};
use crate::{emit_json, prepare_output, Run};

#[derive(Subcommand, Debug)]
pub enum GenCommand {
    /// Train a generator on a split, keeping the best validation checkpoint.
    Train(TrainArgs),
    /// Decode one part of a split to JSONL.
    Decode(DecodeArgs),
    /// Decode and score one part of a split.
    Eval(GenEvalArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// bilstm, transformer, tri, or e2e [default: bilstm].
    #[arg(long)]
    arch: Option<Architecture>,
    /// all, oracle, ranker:K, or none [default: all; e2e always uses its own].
    #[arg(long)]
    claims: Option<ClaimSource>,
    #[arg(long)]
    steps: Option<usize>,
    /// Selector model; required with --claims ranker:K.
    #[arg(long)]
    selector: Option<PathBuf>,
    /// Any generator config field, e.g. --set hidden=128 (repeatable).
    #[arg(long = "set", value_name = "FIELD=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DecodeOptions {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "test")]
    part: String,
    /// greedy, beam:K, or beam (the model's configured beam width).
    #[arg(long, default_value = "greedy")]
    mode: String,
    /// Selector model for ranker-trained generators.
    #[arg(long)]
    selector: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    opts: DecodeOptions,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenEvalArgs {
    #[command(flatten)]
    opts: DecodeOptions,
    #[arg(long, value_enum, default_value = "pm")]
    bucket: Bucket,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One line of a decode file.
#[derive(Serialize)]
struct DecodeLine<'a> {
    id: &'a str,
    prediction: String,
    target: String,
}

fn generator_config(run: &Run, args: &TrainArgs) -> Result<GenModelConfig> {
    let file = run.settings.section("gen");
    let arch = match args.arch {
        Some(a) => a,
        None => match file.iter().find(|(k, _)| *k == "architecture") {
            Some((_, v)) => v.parse().map_err(anyhow::Error::msg)?,
            None => Architecture::BilstmConcat,
        },
    };
    let base = GenModelConfig::for_architecture(arch);
    let mut config = apply_overrides(
        &base,
        file.into_iter().filter(|(k, _)| *k != "architecture"),
    )?;
    let sets: Vec<(&str, &str)> = args
        .overrides
        .iter()
        .map(|s| split_assignment(s))
        .collect::<Result<_>>()?;
    config = apply_overrides(&config, sets)?;
    if let Some(c) = args.claims {
        config.claim_source = c;
    }
    if let Some(s) = args.steps {
        config.total_steps = s;
        config.eval_every = config.eval_every.min(s);
    }
    config.architecture = arch;
    config.seed = run.seed;
    config.validate()?;
    Ok(config)
}

/// Per-part, per-instance, per-claim selector scores.
type PartScores = Vec<Vec<Vec<f64>>>;

/// Selector scores when `source` needs them.
fn ranker_scores(
    run: &Run,
    source: ClaimSource,
    selector: Option<&Path>,
    parts: &[&[PomoInstance]],
) -> Result<Option<(PathBuf, PartScores)>> {
    if !matches!(source, ClaimSource::Ranker(_)) {
        return Ok(None);
    }
    let Some(path) = selector else {
        bail!("claim source {source} needs --selector");
    };
    let path = run.input(path)?;
    let sel = Selector::load(&path)?;
    let scores = parts.iter().map(|p| sel.scores(p)).collect();
    Ok(Some((path, scores)))
}

fn examples(
    instances: &[PomoInstance],
    config: &GenModelConfig,
    scores: Option<&[Vec<f64>]>,
) -> Result<Vec<GenExample>> {
    Ok(prepare_examples(
        instances,
        config.claim_source,
        config.max_input_len,
        scores,
    )?)
}

fn train(run: &Run, args: TrainArgs) -> Result<()> {
    let dir = run.input(&args.data)?;
    let split = read_dataset(&dir)?;
    let config = generator_config(run, &args)?;
    let scored = ranker_scores(
        run,
        config.claim_source,
        args.selector.as_deref(),
        &[&split.train, &split.valid],
    )?;
    let (train_ex, valid_ex) = match &scored {
        Some((_, s)) => (
            examples(&split.train, &config, Some(&s[0]))?,
            examples(&split.valid, &config, Some(&s[1]))?,
        ),
        None => (
            examples(&split.train, &config, None)?,
            examples(&split.valid, &config, None)?,
        ),
    };
    let trained = train_generator(&train_ex, &valid_ex, &config)?;
    prepare_output(&args.out)?;
    trained.model.save(&args.out)?;
    let log_path = with_suffix(&args.out, ".log.json");
    emit_json(&trained.log, Some(&log_path))?;
    let mut inputs: Vec<&Path> = vec![&dir];
    if let Some((p, _)) = &scored {
        inputs.push(p);
    }
    let sidecar = sidecar_path(&args.out);
    run.manifest(
        "gen train",
        &json!({ "model": config }),
        &inputs,
        &[&args.out, &sidecar, &log_path],
    )?;
    let best = trained
        .log
        .iter()
        .find(|l| l.step == trained.best_step)
        .expect("best step is logged");
    println!(
        "best step {} valid F1 {:.4}",
        trained.best_step, best.valid.f1
    );
    Ok(())
}

struct Decoded {
    inputs: Vec<PathBuf>,
    instances: Vec<PomoInstance>,
    predictions: Vec<Vec<String>>,
    mode: DecodeMode,
}

fn decode_part(run: &Run, opts: &DecodeOptions) -> Result<Decoded> {
    let dir = run.input(&opts.data)?;
    let model_path = run.input(&opts.model)?;
    let split = read_dataset(&dir)?;
    let instances = part(&split, &opts.part)?.to_vec();
    let model = GenModel::load(&model_path)?;
    let scored = ranker_scores(
        run,
        model.config.claim_source,
        opts.selector.as_deref(),
        &[&instances],
    )?;
    let ex = examples(
        &instances,
        &model.config,
        scored.as_ref().map(|(_, s)| s[0].as_slice()),
    )?;
    let mode = match opts.mode.as_str() {
        "beam" => DecodeMode::Beam(model.config.beam_width),
        m => m.parse().map_err(anyhow::Error::msg)?,
    };
    let predictions = decode_batch(&model, &ex, mode, model.config.max_output_len)?;
    let mut inputs = vec![dir, model_path];
    inputs.extend(scored.map(|(p, _)| p));
    Ok(Decoded {
        inputs,
        instances,
        predictions,
        mode,
    })
}

fn decode(run: &Run, args: DecodeArgs) -> Result<()> {
    let d = decode_part(run, &args.opts)?;
    prepare_output(&args.out)?;
    let f = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(f);
    for (inst, pred) in d.instances.iter().zip(&d.predictions) {
        let line = DecodeLine {
            id: &inst.id,
            prediction: pred.join(" "),
            target: inst.pm_target.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    w.flush()?;
    let inputs: Vec<&Path> = d.inputs.iter().map(PathBuf::as_path).collect();
    let cfg = json!({ "part": args.opts.part, "mode": d.mode.to_string() });
    run.manifest("gen decode", &cfg, &inputs, &[&args.out])?;
    println!("decoded {} instances", d.instances.len());
    Ok(())
}

fn eval(run: &Run, args: GenEvalArgs) -> Result<()> {
    let d = decode_part(run, &args.opts)?;
    let pairs: Vec<EvalPair> = d
        .instances
        .iter()
        .zip(&d.predictions)
        .map(|(inst, pred)| EvalPair {
            prediction: pred.join(" "),
            target: inst.pm_target.clone(),
            sent_with_slot: inst.sent_with_slot.clone(),
        })
        .collect();
    let report = full_report(&pairs, args.bucket.into());
    emit_json(&report, args.out.as_deref())?;
    if let Some(out) = &args.out {
        let inputs: Vec<&Path> = d.inputs.iter().map(PathBuf::as_path).collect();
        let cfg =
            json!({ "part": args.opts.part, "mode": d.mode.to_string(), "bucket": args.bucket });
        run.manifest("gen eval", &cfg, &inputs, &[out])?;
    }
    Ok(())
}

pub fn dispatch(run: &Run, cmd: GenCommand) -> Result<()> {
    match cmd {
        GenCommand::Train(a) => train(run, a),
        GenCommand::Decode(a) => decode(run, a),
        GenCommand::Eval(a) => eval(run, a),
    }
}
