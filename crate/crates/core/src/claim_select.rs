//! Claim selection: the most-common-fact-type baseline and a neural scorer
//! used as a thresholded classifier or a top-n ranker.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use pomo_nn::{
    Adam, Grads, Graph, Linear, LrSchedule, Lstm, Matrix, Optimizer, ParamId, ParamStore, Sgd, Var,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint;
use crate::dataset::{sort_counts, PomoInstance};
use crate::error::{Error, Result};
use crate::eval_metrics::Prf;
use crate::vocab::{Vocab, PAD};

pub const DEFAULT_TAU: f64 = 0.37;
pub const DEFAULT_RANKER_N: usize = 2;
pub const DEFAULT_MCC_N: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorMode {
    /// Most-common fact types.
    Mcc,
    Classifier,
    Ranker,
}

impl FromStr for SelectorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mcc" => Ok(SelectorMode::Mcc),
            "classifier" => Ok(SelectorMode::Classifier),
            "ranker" => Ok(SelectorMode::Ranker),
            _ => Err(format!(
                "unknown selector mode {s:?} (expected mcc, classifier, or ranker)"
            )),
        }
    }
}

impl fmt::Display for SelectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectorMode::Mcc => "mcc",
            SelectorMode::Classifier => "classifier",
            SelectorMode::Ranker => "ranker",
        })
    }
}

/// First-order update rule used for training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain mini-batch gradient descent.
    #[default]
    Sgd,
    /// Adam with a constant learning rate.
    Adam,
}

impl OptimizerKind {
    pub fn build(self, learning_rate: f64) -> Box<dyn Optimizer> {
        match self {
            OptimizerKind::Sgd => Box::new(Sgd::new(learning_rate)),
            OptimizerKind::Adam => Box::new(Adam::new(learning_rate, LrSchedule::Constant)),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(format!("unknown optimizer {s:?} (expected sgd or adam)")),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelModelConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Keep probability of the dropout between recurrent layers.
    pub keep_prob: f64,
    pub tau: f64,
    pub top_n: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_scale: f64,
    pub max_grad_norm: f64,
    /// Context tokens beyond this are dropped from the left.
    pub max_context_len: usize,
    pub seed: u64,
}

impl Default for SelModelConfig {
    fn default() -> Self {
        SelModelConfig {
            vocab_size: 50_000,
            embedding_dim: 100,
            hidden: 256,
            layers: 2,
            keep_prob: 0.5,
            tau: DEFAULT_TAU,
            top_n: DEFAULT_RANKER_N,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 32,
            init_scale: 0.1,
            max_grad_norm: 5.0,
            max_context_len: 400,
            seed: 1,
        }
    }
}

impl SelModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.vocab_size,
            self.embedding_dim,
            self.hidden,
            self.layers,
            self.epochs,
            self.batch_size,
            self.max_context_len,
        ];
        if dims.contains(&0) {
            return Err(Error::invalid(
                "selector dimensions, epochs, and batch size must be positive",
            ));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!(
                "tau {} must be in (0, 1)",
                self.tau
            )));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::invalid(format!(
                "keep probability {} must be in (0, 1]",
                self.keep_prob
            )));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SelectionResult {
    pub scores: Vec<f64>,
    pub selected: BTreeSet<usize>,
}

/// How selected claims are read off a score vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SelectRule {
    Threshold(f64),
    TopN(usize),
}

impl SelectRule {
    pub fn apply(self, scores: &[f64]) -> BTreeSet<usize> {
        match self {
            SelectRule::Threshold(t) => select_by_threshold(scores, t),
            SelectRule::TopN(n) => select_top_n(scores, n),
        }
    }
}

pub fn select_by_threshold(scores: &[f64], tau: f64) -> BTreeSet<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > tau)
        .map(|(i, _)| i)
        .collect()
}

/// Indices of the `n` largest scores; ties go to the lower index.
pub fn select_top_n(scores: &[f64], n: usize) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.into_iter().take(n).collect()
}

/// Fact types by descending count of relevant training claims, ties lexicographic.
pub fn fact_type_ranking(train: &[PomoInstance]) -> Vec<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for inst in train {
        for c in inst.claims.iter().filter(|c| c.relevant) {
            *counts.entry(&c.key).or_default() += 1;
        }
    }
    sort_counts(counts).into_iter().map(|(k, _)| k).collect()
}

/// Anything that assigns every claim of an instance a score.
pub trait ClaimScorer: Sync {
    fn score_batch(&self, batch: &[&PomoInstance]) -> Vec<Vec<f64>>;

    fn score_claims(&self, inst: &PomoInstance) -> Vec<f64> {
        self.score_batch(&[inst])
            .pop()
            .expect("one score vector per instance")
    }
}

/// Scores all instances in chunks, in parallel on the current rayon pool.
/// The output order and values do not depend on the thread count.
pub fn score_all(
    scorer: &dyn ClaimScorer,
    instances: &[PomoInstance],
    chunk: usize,
) -> Vec<Vec<f64>> {
    let refs: Vec<&PomoInstance> = instances.iter().collect();
    refs.par_chunks(chunk.max(1))
        .flat_map_iter(|c| scorer.score_batch(c))
        .collect()
}

/// The most-common-fact-type baseline: a claim scores `1 / (1 + rank)` with
/// 1-based rank, and keys absent from the ranking rank last.
#[derive(Clone, Debug)]
pub struct MostCommon {
    rank_of: HashMap<String, usize>,
}

impl MostCommon {
    pub fn new(ranking: &[String]) -> Self {
        MostCommon {
            rank_of: ranking
                .iter()
                .enumerate()
                .map(|(i, k)| (k.clone(), i + 1))
                .collect(),
        }
    }

    pub fn scores(&self, inst: &PomoInstance) -> Vec<f64> {
        let unranked = self.rank_of.len() + 1;
        inst.claims
            .iter()
            .map(|c| 1.0 / (1.0 + *self.rank_of.get(&c.key).unwrap_or(&unranked) as f64))
            .collect()
    }
}

impl ClaimScorer for MostCommon {
    fn score_batch(&self, batch: &[&PomoInstance]) -> Vec<Vec<f64>> {
        batch.iter().map(|i| self.scores(i)).collect()
    }
}

pub fn select_most_common(inst: &PomoInstance, ranking: &[String], n: usize) -> SelectionResult {
    let scores = MostCommon::new(ranking).scores(inst);
    SelectionResult {
        selected: select_top_n(&scores, n),
        scores,
    }
}

pub fn evaluate_selection(pred: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> Prf {
    Prf::from_counts(pred.intersection(gold).count(), pred.len(), gold.len())
}

/// Micro-averaged scores over instances.
pub fn evaluate_corpus(preds: &[BTreeSet<usize>], instances: &[PomoInstance]) -> Prf {
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (p, inst) in preds.iter().zip(instances) {
        let gold = inst.gold();
        tp += p.intersection(&gold).count();
        np += p.len();
        ng += gold.len();
    }
    Prf::from_counts(tp, np, ng)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactTypeRow {
    pub key: String,
    pub gold: usize,
    pub scores: Prf,
}

/// Scores restricted to each fact type, most frequent gold type first.
/// Types that never occur as gold are left out.
pub fn per_fact_type_f1(preds: &[BTreeSet<usize>], instances: &[PomoInstance]) -> Vec<FactTypeRow> {
    let mut counts: HashMap<&str, (usize, usize, usize)> = HashMap::new();
    for (p, inst) in preds.iter().zip(instances) {
        for (i, c) in inst.claims.iter().enumerate() {
            let e = counts.entry(&c.key).or_default();
            let predicted = p.contains(&i);
            e.0 += (predicted && c.relevant) as usize;
            e.1 += predicted as usize;
            e.2 += c.relevant as usize;
        }
    }
    let mut rows: Vec<FactTypeRow> = counts
        .into_iter()
        .filter(|(_, c)| c.2 > 0)
        .map(|(k, (tp, np, ng))| FactTypeRow {
            key: k.to_string(),
            gold: ng,
            scores: Prf::from_counts(tp, np, ng),
        })
        .collect();
    rows.sort_by(|a, b| b.gold.cmp(&a.gold).then_with(|| a.key.cmp(&b.key)));
    rows
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Top-n evaluation of fixed score vectors for every `n` in `ns`.
pub fn sweep_n(
    scores: &[Vec<f64>],
    instances: &[PomoInstance],
    ns: impl IntoIterator<Item = usize>,
) -> Vec<SweepRow> {
    ns.into_iter()
        .map(|n| {
            let preds: Vec<BTreeSet<usize>> = scores.iter().map(|s| select_top_n(s, n)).collect();
            let p = evaluate_corpus(&preds, instances);
            SweepRow {
                n,
                precision: p.precision,
                recall: p.recall,
                f1: p.f1,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
struct SelLayout {
    embedding: ParamId,
    context: Lstm,
    claim: Lstm,
    out: Linear,
}

/// Context and claim encoders with a scoring layer over
/// `[context; claim; context ⊙ claim]`.
#[derive(Clone, Debug)]
pub struct NeuralSelector {
    pub config: SelModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    layout: SelLayout,
}

/// Whitespace tokens of the previous and current sentence, at most `max` (the
/// rightmost are kept); never empty.
pub fn context_tokens(inst: &PomoInstance, max: usize) -> Vec<&str> {
    let mut toks: Vec<&str> = inst
        .prev_sentence
        .split_whitespace()
        .chain(inst.sent_with_slot.split_whitespace())
        .collect();
    if toks.len() > max {
        toks.drain(..toks.len() - max);
    }
    if toks.is_empty() {
        toks.push(PAD);
    }
    toks
}

/// `key value` tokens of one claim.
pub fn claim_tokens(key: &str, value: &str) -> Vec<String> {
    key.split_whitespace()
        .chain(value.split_whitespace())
        .map(str::to_string)
        .collect()
}

/// Time-major ids and `B x 1` masks for a batch of id sequences.
pub(crate) fn time_major(seqs: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<Matrix>) {
    let len = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let ids = (0..len)
        .map(|t| {
            seqs.iter()
                .map(|s| s.get(t).copied().unwrap_or(0))
                .collect()
        })
        .collect();
    let masks = (0..len)
        .map(|t| {
            Matrix::column(
                seqs.iter()
                    .map(|s| if t < s.len() { 1.0 } else { 0.0 })
                    .collect(),
            )
        })
        .collect();
    (ids, masks)
}

impl NeuralSelector {
    pub fn new(config: SelModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let s = config.init_scale;
        let embedding = store.add_uniform(
            "sel.embedding",
            vocab.len(),
            config.embedding_dim,
            s,
            &mut rng,
        );
        let context = Lstm::new(
            &mut store,
            "sel.context",
            config.embedding_dim,
            config.hidden,
            config.layers,
            s,
            &mut rng,
        );
        let claim = Lstm::new(
            &mut store,
            "sel.claim",
            config.embedding_dim,
            config.hidden,
            config.layers,
            s,
            &mut rng,
        );
        let out = Linear::new(
            &mut store,
            "sel.out",
            3 * config.hidden,
            1,
            true,
            s,
            &mut rng,
        );
        Ok(NeuralSelector {
            config,
            vocab,
            store,
            layout: SelLayout {
                embedding,
                context,
                claim,
                out,
            },
        })
    }

    /// Vocabulary over training contexts and claim texts.
    pub fn build_vocab(train: &[PomoInstance], size: usize, max_context_len: usize) -> Vocab {
        let mut toks: Vec<String> = Vec::new();
        for inst in train {
            toks.extend(
                context_tokens(inst, max_context_len)
                    .into_iter()
                    .map(str::to_string),
            );
            for c in &inst.claims {
                toks.extend(claim_tokens(&c.key, &c.value));
            }
        }
        Vocab::build(toks.iter().map(String::as_str), size)
    }

    fn encode(
        &self,
        g: &mut Graph,
        enc: &Lstm,
        seqs: &[Vec<usize>],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Var {
        let (ids, masks) = time_major(seqs);
        let xs: Vec<Var> = ids
            .iter()
            .map(|step| g.embedding(self.layout.embedding, step))
            .collect();
        let ms: Vec<Var> = masks.into_iter().map(|m| g.constant(m)).collect();
        let keep = self.config.keep_prob;
        let (_, finals) = enc.run(g, &xs, &ms, None, dropout.map(|r| (keep, r)));
        finals.last().expect("at least one layer").0
    }

    /// Claim logits for a batch, flattened in instance-then-claim order.
    /// Returns `None` when the batch has no claims.
    fn logits(
        &self,
        g: &mut Graph,
        batch: &[&PomoInstance],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Option<Var> {
        let mut claim_seqs = Vec::new();
        let mut owner = Vec::new();
        for (b, inst) in batch.iter().enumerate() {
            for c in &inst.claims {
                let mut ids = self.vocab.encode(&claim_tokens(&c.key, &c.value));
                if ids.is_empty() {
                    ids.push(0);
                }
                claim_seqs.push(ids);
                owner.push(b);
            }
        }
        if claim_seqs.is_empty() {
            return None;
        }
        let ctx_seqs: Vec<Vec<usize>> = batch
            .iter()
            .map(|i| {
                self.vocab
                    .encode(&context_tokens(i, self.config.max_context_len))
            })
            .collect();
        let ctx = self.encode(g, &self.layout.context, &ctx_seqs, dropout.as_deref_mut());
        let claims = self.encode(g, &self.layout.claim, &claim_seqs, dropout);
        let ctx = g.gather_rows(ctx, &owner);
        let both = g.mul(ctx, claims);
        let feat = g.concat_cols(&[ctx, claims, both]);
        Some(self.layout.out.forward(g, feat))
    }

    /// Training loss (mean BCE over the batch's claims), or `None` without claims.
    pub fn loss<'a>(
        &'a self,
        g: &mut Graph<'a>,
        batch: &[&PomoInstance],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Option<Var> {
        let logits = self.logits(g, batch, dropout)?;
        let targets: Vec<f64> = batch
            .iter()
            .flat_map(|i| i.claims.iter().map(|c| c.relevant as u8 as f64))
            .collect();
        let w = 1.0 / targets.len() as f64;
        Some(g.bce_logits(logits, &targets, &vec![w; targets.len()]))
    }

    pub fn save(&self, path: &Path, mode: SelectorMode) -> Result<()> {
        let header =
            json!({"kind": "selector", "mode": mode, "config": self.config, "vocab": self.vocab});
        let side = vec![
            ("kind".to_string(), "selector".to_string()),
            ("mode".into(), mode.to_string()),
            ("format_version".into(), checkpoint::VERSION.to_string()),
            ("vocab_size".into(), self.vocab.len().to_string()),
            ("vocab_sha256".into(), self.vocab.hash()),
        ]
        .into_iter()
        .chain(config_pairs(&self.config))
        .collect::<Vec<_>>();
        checkpoint::save(path, &header, &self.store, &side)
    }

    pub fn load(path: &Path) -> Result<(Self, SelectorMode)> {
        let ck = checkpoint::load(path)?;
        if ck.header["kind"] != "selector" {
            return Err(Error::Checkpoint(format!(
                "{} is not a selector checkpoint",
                path.display()
            )));
        }
        let parse = |k: &str| -> Result<serde_json::Value> {
            ck.header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("header lacks {k}")))
        };
        let bad = |e: serde_json::Error| Error::Checkpoint(e.to_string());
        let config: SelModelConfig = serde_json::from_value(parse("config")?).map_err(bad)?;
        let vocab: Vocab = serde_json::from_value(parse("vocab")?).map_err(bad)?;
        let mode: SelectorMode = serde_json::from_value(parse("mode")?).map_err(bad)?;
        let mut model = NeuralSelector::new(config, vocab)?;
        checkpoint::restore(&mut model.store, &ck.params)?;
        Ok((model, mode))
    }
}

/// Flat `key=value` rendering of a serializable config.
pub fn config_pairs<T: Serialize>(config: &T) -> Vec<(String, String)> {
    match serde_json::to_value(config) {
        Ok(serde_json::Value::Object(m)) => m
            .into_iter()
            .map(|(k, v)| {
                let v = match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                (k, v)
            })
            .collect(),
        _ => Vec::new(),
    }
}

impl ClaimScorer for NeuralSelector {
    fn score_batch(&self, batch: &[&PomoInstance]) -> Vec<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let Some(logits) = self.logits(&mut g, batch, None) else {
            return batch.iter().map(|_| Vec::new()).collect();
        };
        let mut flat = g.value(logits).data().iter().map(|&x| pomo_nn::sigmoid(x));
        batch
            .iter()
            .map(|i| flat.by_ref().take(i.claims.len()).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid: Prf,
}

pub struct TrainedSelector {
    pub model: NeuralSelector,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Mini-batch gradient descent on claim-level BCE. After every epoch the
/// model is scored on `valid` with `rule`; the best-F1 epoch's parameters
/// are returned.
pub fn train_selector(
    train: &[PomoInstance],
    valid: &[PomoInstance],
    config: &SelModelConfig,
    rule: SelectRule,
) -> Result<TrainedSelector> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::invalid(
            "selector training needs non-empty train and valid sets",
        ));
    }
    if !train.iter().any(|i| i.claims.iter().any(|c| c.relevant)) {
        return Err(Error::invalid("no relevant claims in the training set"));
    }
    let vocab = NeuralSelector::build_vocab(train, config.vocab_size, config.max_context_len);
    let mut model = NeuralSelector::new(config.clone(), vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = config.optimizer.build(config.learning_rate);
    let mut grads = Grads::zeros_like(&model.store);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PomoInstance> = chunk.iter().map(|&i| &train[i]).collect();
            grads.zero();
            let loss_value = {
                let mut g = Graph::new(&model.store);
                let Some(loss) = model.loss(&mut g, &batch, Some(&mut rng)) else {
                    continue;
                };
                g.backward(loss, &mut grads);
                g.value(loss).item()
            };
            grads.clip_global_norm(config.max_grad_norm);
            opt.step(&mut model.store, &grads);
            total += loss_value;
            batches += 1;
        }
        let scores = score_all(&model, valid, config.batch_size);
        let preds: Vec<BTreeSet<usize>> = scores.iter().map(|s| rule.apply(s)).collect();
        let prf = evaluate_corpus(&preds, valid);
        let train_loss = if batches > 0 {
            total / batches as f64
        } else {
            0.0
        };
        log::info!(
            "selector epoch {epoch}: loss {train_loss:.4} valid F1 {:.4}",
            prf.f1
        );
        log.push(EpochLog {
            epoch,
            train_loss,
            valid: prf,
        });
        if best.as_ref().is_none_or(|(f, _, _)| prf.f1 > *f) {
            best = Some((prf.f1, epoch, model.store.clone()));
        }
    }
    let (_, best_epoch, store) = best.expect("at least one epoch");
    model.store = store;
    Ok(TrainedSelector {
        model,
        log,
        best_epoch,
    })
}

/// Applies `rule` to every instance's scores.
pub fn predict(
    scorer: &dyn ClaimScorer,
    instances: &[PomoInstance],
    rule: SelectRule,
) -> Vec<SelectionResult> {
    score_all(scorer, instances, 32)
        .into_iter()
        .map(|scores| SelectionResult {
            selected: rule.apply(&scores),
            scores,
        })
        .collect()
}
