//! `select train|eval|sweep`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use pomo_core::checkpoint::{sidecar_path, MAGIC};
use pomo_core::claim_select::{
    evaluate_corpus, fact_type_ranking, per_fact_type_f1, score_all, sweep_n, train_selector,
    ClaimScorer, MostCommon, NeuralSelector, SelModelConfig, SelectRule, SelectorMode,
    DEFAULT_MCC_N,
};
use pomo_core::dataset::{read_dataset, DatasetSplit, PomoInstance};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::settings::{apply_overrides, split_assignment};
use crate::{emit_json, prepare_output, Run};

#[derive(Subcommand, Debug)]
pub enum SelectCommand {
    /// Train a selector (or compute the most-common ranking) on a split.
    Train(TrainArgs),
    /// Score a selector's picks against the relevance labels.
    Eval(EvalArgs),
    /// Precision, recall, and F1 of the top-n picks for n = 1..=max-n.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Split directory with train.jsonl and valid.jsonl.
    #[arg(long)]
    data: PathBuf,
    /// ranker, classifier, or mcc.
    #[arg(long, default_value = "ranker")]
    mode: SelectorMode,
    /// Claims kept by the ranker.
    #[arg(long)]
    n: Option<usize>,
    /// Classifier threshold.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Any selector config field, e.g. --set hidden=64 (repeatable).
    #[arg(long = "set", value_name = "FIELD=VALUE")]
    overrides: Vec<String>,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "test")]
    part: String,
    /// Picks per instance for top-n modes; defaults to the model's own.
    #[arg(long)]
    n: Option<usize>,
    /// Threshold for the classifier; defaults to the model's own.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "valid")]
    part: String,
    #[arg(long, default_value_t = 8)]
    max_n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct MostCommonFile {
    kind: String,
    ranking: Vec<String>,
}

/// A trained selector of any mode.
pub enum Selector {
    MostCommon(MostCommon),
    Neural(Box<NeuralSelector>, SelectorMode),
}

impl Selector {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        if bytes.starts_with(MAGIC) {
            let (model, mode) = NeuralSelector::load(path)?;
            return Ok(Selector::Neural(Box::new(model), mode));
        }
        let file: MostCommonFile = serde_json::from_slice(&bytes)
            .with_context(|| format!("{} is not a selector model", path.display()))?;
        if file.kind != "mcc" {
            bail!("{} is not a selector model", path.display());
        }
        Ok(Selector::MostCommon(MostCommon::new(&file.ranking)))
    }

    pub fn mode(&self) -> SelectorMode {
        match self {
            Selector::MostCommon(_) => SelectorMode::Mcc,
            Selector::Neural(_, m) => *m,
        }
    }

    pub fn scorer(&self) -> &dyn ClaimScorer {
        match self {
            Selector::MostCommon(m) => m,
            Selector::Neural(m, _) => m.as_ref(),
        }
    }

    pub fn scores(&self, instances: &[PomoInstance]) -> Vec<Vec<f64>> {
        score_all(self.scorer(), instances, 32)
    }

    fn rule(&self, n: Option<usize>, tau: Option<f64>) -> SelectRule {
        match self {
            Selector::MostCommon(_) => SelectRule::TopN(n.unwrap_or(DEFAULT_MCC_N)),
            Selector::Neural(m, SelectorMode::Classifier) => {
                SelectRule::Threshold(tau.unwrap_or(m.config.tau))
            }
            Selector::Neural(m, _) => SelectRule::TopN(n.unwrap_or(m.config.top_n)),
        }
    }
}

fn describe(rule: SelectRule) -> String {
    match rule {
        SelectRule::Threshold(t) => format!("threshold:{t}"),
        SelectRule::TopN(n) => format!("top:{n}"),
    }
}

pub fn part<'a>(split: &'a DatasetSplit, name: &str) -> Result<&'a [PomoInstance]> {
    match split.parts().into_iter().find(|(n, _)| *n == name) {
        Some((_, p)) => Ok(p),
        None => bail!("unknown part {name:?} (expected train, valid, or test)"),
    }
}

/// Selector config: defaults, then the config file, then `--set`, then dedicated flags.
fn selector_config(run: &Run, args: &TrainArgs) -> Result<SelModelConfig> {
    let mut config = apply_overrides(&SelModelConfig::default(), run.settings.section("select"))?;
    let sets: Vec<(&str, &str)> = args
        .overrides
        .iter()
        .map(|s| split_assignment(s))
        .collect::<Result<_>>()?;
    config = apply_overrides(&config, sets)?;
    if let Some(n) = args.n {
        config.top_n = n;
    }
    if let Some(t) = args.tau {
        config.tau = t;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    config.seed = run.seed;
    config.validate()?;
    Ok(config)
}

fn train(run: &Run, args: TrainArgs) -> Result<()> {
    let dir = run.input(&args.data)?;
    let split = read_dataset(&dir)?;
    prepare_output(&args.out)?;
    if args.mode == SelectorMode::Mcc {
        let ranking = fact_type_ranking(&split.train);
        let file = MostCommonFile {
            kind: "mcc".into(),
            ranking,
        };
        emit_json(&file, Some(&args.out))?;
        run.manifest(
            "select train",
            &json!({ "mode": "mcc" }),
            &[&dir],
            &[&args.out],
        )?;
        println!("ranked {} fact types", file.ranking.len());
        return Ok(());
    }
    let config = selector_config(run, &args)?;
    let rule = match args.mode {
        SelectorMode::Classifier => SelectRule::Threshold(config.tau),
        _ => SelectRule::TopN(config.top_n),
    };
    let trained = train_selector(&split.train, &split.valid, &config, rule)?;
    trained.model.save(&args.out, args.mode)?;
    let log_path = with_suffix(&args.out, ".log.json");
    emit_json(&trained.log, Some(&log_path))?;
    let cfg = json!({ "mode": args.mode, "model": config });
    let sidecar = sidecar_path(&args.out);
    run.manifest(
        "select train",
        &cfg,
        &[&dir],
        &[&args.out, &sidecar, &log_path],
    )?;
    let best = &trained.log[trained.best_epoch - 1];
    println!(
        "best epoch {} valid F1 {:.4}",
        trained.best_epoch, best.valid.f1
    );
    Ok(())
}

pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn eval(run: &Run, args: EvalArgs) -> Result<()> {
    let dir = run.input(&args.data)?;
    let model_path = run.input(&args.model)?;
    let split = read_dataset(&dir)?;
    let instances = part(&split, &args.part)?;
    let selector = Selector::load(&model_path)?;
    let rule = selector.rule(args.n, args.tau);
    let preds: Vec<BTreeSet<usize>> = selector
        .scores(instances)
        .iter()
        .map(|s| rule.apply(s))
        .collect();
    let report = json!({
        "mode": selector.mode(),
        "rule": describe(rule),
        "part": args.part,
        "instances": instances.len(),
        "scores": evaluate_corpus(&preds, instances),
        "per_fact_type": per_fact_type_f1(&preds, instances),
    });
    emit_json(&report, args.out.as_deref())?;
    if let Some(out) = &args.out {
        let cfg = json!({ "part": args.part, "rule": describe(rule) });
        run.manifest("select eval", &cfg, &[&dir, &model_path], &[out])?;
    }
    Ok(())
}

fn sweep(run: &Run, args: SweepArgs) -> Result<()> {
    let dir = run.input(&args.data)?;
    let model_path = run.input(&args.model)?;
    let split = read_dataset(&dir)?;
    let instances = part(&split, &args.part)?;
    let selector = Selector::load(&model_path)?;
    let rows = sweep_n(&selector.scores(instances), instances, 1..=args.max_n);
    emit_json(&rows, args.out.as_deref())?;
    if let Some(out) = &args.out {
        let cfg = json!({ "part": args.part, "max_n": args.max_n });
        run.manifest("select sweep", &cfg, &[&dir, &model_path], &[out])?;
    }
    Ok(())
}

pub fn dispatch(run: &Run, cmd: SelectCommand) -> Result<()> {
    match cmd {
        SelectCommand::Train(a) => train(run, a),
        SelectCommand::Eval(a) => eval(run, a),
        SelectCommand::Sweep(a) => sweep(run, a),
    }
}
