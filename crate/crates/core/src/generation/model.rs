use std::ops::Range;
use std::path::Path;

use pomo_nn::{Graph, Matrix, ParamStore, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::batch::{make_batch, teacher, Batch};
use super::rnn::{RnnMemory, RnnModel, RnnState};
use super::transformer::{TfMemory, TransformerModel};
use super::{Architecture, AuxAggregation, GenExample, GenModelConfig};
use crate::checkpoint;
use crate::claim_select::config_pairs;
use crate::error::{Error, Result};
use crate::vocab::{Vocab, BOS_ID};

/// Reference auxiliary loss for one instance, from per-step attention rows
/// over input positions: `s_c` aggregates the attention mass on claim `c`'s
/// span over steps, and the loss is the mean of `BCE(σ(s_c), relevant_c)`.
/// Zero claims give 0.
pub fn claim_attention_aux_loss(
    step_attention: &[Vec<f64>],
    spans: &[Range<usize>],
    relevant: &[bool],
    aggregation: AuxAggregation,
) -> f64 {
    if spans.is_empty() {
        return 0.0;
    }
    let steps = step_attention.len().max(1) as f64;
    let total: f64 = spans
        .iter()
        .zip(relevant)
        .map(|(span, &rel)| {
            let mut s: f64 = step_attention
                .iter()
                .map(|a| a[span.clone()].iter().sum::<f64>())
                .sum();
            if aggregation == AuxAggregation::Mean {
                s /= steps;
            }
            let p = pomo_nn::sigmoid(s);
            if rel {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / spans.len() as f64
}

#[derive(Clone, Debug)]
enum Net {
    Rnn(RnnModel),
    Transformer(TransformerModel),
}

/// A generator: configuration, vocabulary, and parameters.
#[derive(Clone, Debug)]
pub struct GenModel {
    pub config: GenModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    net: Net,
}

/// Graph nodes of one training loss.
pub struct LossParts {
    /// `nll` (label-smoothed for the transformer) plus `aux_weight · aux`.
    pub total: Var,
    /// Mean negative log-likelihood per target token.
    pub nll: Var,
    /// Auxiliary claim-selection loss (e2e only; `None` without claims).
    pub aux: Option<Var>,
    /// `(B·C) x 1` aggregated claim attention scores, row `b·C + c`, with
    /// `C` the most claims of any row (e2e only).
    pub claim_scores: Option<(Var, usize)>,
}

pub(crate) enum Memory {
    Rnn(RnnMemory),
    Tf(TfMemory),
}

#[derive(Clone)]
pub(crate) enum DecState {
    Rnn(RnnState),
    /// Decoder inputs so far, per row.
    Tf(Vec<Vec<usize>>),
}

impl GenModel {
    pub fn new(config: GenModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let net = if config.architecture.is_recurrent() {
            Net::Rnn(RnnModel::new(&mut store, &config, vocab.len(), &mut rng))
        } else {
            Net::Transformer(TransformerModel::new(
                &mut store,
                &config,
                vocab.len(),
                &mut rng,
            ))
        };
        Ok(GenModel {
            config,
            vocab,
            store,
            net,
        })
    }

    pub(crate) fn batch(&self, examples: &[&GenExample]) -> Result<Batch> {
        make_batch(
            examples,
            &self.vocab,
            self.config.copy_enabled(),
            self.config.max_output_len,
        )
    }

    pub(crate) fn encode(
        &self,
        g: &mut Graph,
        batch: &Batch,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Memory {
        match &self.net {
            Net::Rnn(m) => Memory::Rnn(m.encode(g, batch, dropout)),
            Net::Transformer(m) => Memory::Tf(m.encode(g, batch, dropout)),
        }
    }

    pub(crate) fn initial_state(&self, g: &mut Graph, mem: &Memory, rows: usize) -> DecState {
        match (&self.net, mem) {
            (Net::Rnn(m), Memory::Rnn(mem)) => DecState::Rnn(m.initial_state(g, mem)),
            _ => DecState::Tf(vec![Vec::new(); rows]),
        }
    }

    /// Next-token distribution (`B x ext`) after feeding `prev`.
    pub(crate) fn step(
        &self,
        g: &mut Graph,
        mem: &Memory,
        state: &DecState,
        prev: &[usize],
    ) -> (Var, DecState) {
        match (&self.net, mem, state) {
            (Net::Rnn(m), Memory::Rnn(mem), DecState::Rnn(s)) => {
                let out = m.step(g, mem, s, prev, None);
                (out.dist, DecState::Rnn(out.state))
            }
            (Net::Transformer(m), Memory::Tf(mem), DecState::Tf(prefixes)) => {
                let prefixes: Vec<Vec<usize>> = prefixes
                    .iter()
                    .zip(prev)
                    .map(|(p, &id)| p.iter().copied().chain([id]).collect())
                    .collect();
                let t = prefixes[0].len();
                let all = m.decode_all(g, mem, &prefixes, None);
                let last: Vec<usize> = (0..prefixes.len()).map(|b| b * t + t - 1).collect();
                (g.gather_rows(all, &last), DecState::Tf(prefixes))
            }
            _ => unreachable!("memory and state come from this model"),
        }
    }

    pub(crate) fn select_rows(&self, g: &mut Graph, mem: &Memory, rows: &[usize]) -> Memory {
        match (&self.net, mem) {
            (Net::Rnn(m), Memory::Rnn(mem)) => Memory::Rnn(m.select_rows(g, mem, rows)),
            (Net::Transformer(m), Memory::Tf(mem)) => Memory::Tf(m.select_rows(g, mem, rows)),
            _ => unreachable!("memory comes from this model"),
        }
    }

    pub(crate) fn reorder(&self, g: &mut Graph, state: &DecState, rows: &[usize]) -> DecState {
        match (&self.net, state) {
            (Net::Rnn(m), DecState::Rnn(s)) => DecState::Rnn(m.reorder(g, s, rows)),
            (_, DecState::Tf(p)) => DecState::Tf(rows.iter().map(|&r| p[r].clone()).collect()),
            _ => unreachable!("state comes from this model"),
        }
    }

    /// Teacher-forced training loss for a batch of examples.
    pub fn loss<'a>(
        &'a self,
        g: &mut Graph<'a>,
        examples: &[&GenExample],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<LossParts> {
        let batch = self.batch(examples)?;
        let tf = teacher(&batch, self.vocab.len());
        let rows = batch.rows;
        let steps = tf.inputs.len();
        // Stacked distributions and their targets and weights, in the
        // row order each network produces.
        let (dist, targets, weights, attn) = match &self.net {
            Net::Rnn(m) => {
                let mem = m.encode(g, &batch, dropout.as_deref_mut());
                let mut state = m.initial_state(g, &mem);
                let mut dists = Vec::with_capacity(steps);
                let mut attns = Vec::with_capacity(steps);
                for prev in &tf.inputs {
                    let out = m.step(g, &mem, &state, prev, dropout.as_deref_mut());
                    dists.push(out.dist);
                    attns.push(out.attn);
                    state = out.state;
                }
                let dist = g.concat_rows(&dists);
                let targets: Vec<usize> = tf.outputs.iter().flatten().copied().collect();
                let weights: Vec<f64> = tf.masks.iter().flat_map(|m| m.data().to_vec()).collect();
                (dist, targets, weights, attns)
            }
            Net::Transformer(m) => {
                let mem = m.encode(g, &batch, dropout.as_deref_mut());
                let prefixes: Vec<Vec<usize>> = (0..rows)
                    .map(|b| tf.inputs.iter().map(|s| s[b]).collect())
                    .collect();
                let dist = m.decode_all(g, &mem, &prefixes, dropout);
                let targets = (0..rows)
                    .flat_map(|b| tf.outputs.iter().map(move |s| s[b]))
                    .collect();
                let weights = (0..rows)
                    .flat_map(|b| tf.masks.iter().map(move |m| m.data()[b]))
                    .collect();
                (dist, targets, weights, Vec::new())
            }
        };
        let n_tokens: f64 = weights.iter().sum();
        let p = g.pick(dist, &targets);
        let lp = g.log(p);
        let w = g.constant(Matrix::column(weights.clone()));
        let wlp = g.mul(lp, w);
        let total_lp = g.sum_all(wlp);
        let nll = g.scale(total_lp, -1.0 / n_tokens);
        let eps = self.config.label_smoothing;
        let mut total = nll;
        if !self.config.architecture.is_recurrent() && eps > 0.0 {
            let v = self.vocab.len();
            let base = g.slice_cols(dist, 0, v);
            let logs = g.log(base);
            let rowsum = g.sum_cols(logs);
            let wrs = g.mul(rowsum, w);
            let s = g.sum_all(wrs);
            let smooth = g.scale(s, -1.0 / (n_tokens * v as f64));
            let a = g.scale(nll, 1.0 - eps);
            let b = g.scale(smooth, eps);
            total = g.add(a, b);
        }
        let (mut aux, mut claim_scores) = (None, None);
        if self.config.architecture == Architecture::E2eClaimSelect {
            let (a, scores) = self.aux_loss(g, &batch, &attn, &tf.masks);
            if let Some(a) = a {
                let weighted = g.scale(a, self.config.aux_weight);
                total = g.add(total, weighted);
            }
            aux = a;
            claim_scores = scores;
        }
        Ok(LossParts {
            total,
            nll,
            aux,
            claim_scores,
        })
    }

    /// Claim score `s_c` = per-step attention mass on the claim's span,
    /// aggregated over decoder steps; loss = mean over claims of
    /// `BCE(σ(s_c), relevant_c)`.
    fn aux_loss(
        &self,
        g: &mut Graph,
        batch: &Batch,
        attn: &[Var],
        masks: &[Matrix],
    ) -> (Option<Var>, Option<(Var, usize)>) {
        let width = batch.claim_segments.iter().map(Vec::len).max().unwrap_or(0);
        if width == 0 {
            return (None, None);
        }
        let mut acc: Option<Var> = None;
        for (a, m) in attn.iter().zip(masks) {
            let seg = g.segment_sum(*a, &batch.claim_segments, width);
            let mc = g.constant(m.clone());
            let seg = g.mul_col(seg, mc);
            acc = Some(match acc {
                Some(x) => g.add(x, seg),
                None => seg,
            });
        }
        let mut scores = acc.expect("at least one decoder step");
        if self.config.aux_aggregation == AuxAggregation::Mean {
            let inv = Matrix::column(batch.targets.iter().map(|t| 1.0 / t.len() as f64).collect());
            let inv = g.constant(inv);
            scores = g.mul_col(scores, inv);
        }
        let flat = g.reshape(scores, batch.rows * width, 1);
        let n_claims: usize = batch.claim_segments.iter().map(Vec::len).sum();
        let mut targets = vec![0.0; batch.rows * width];
        let mut weights = vec![0.0; batch.rows * width];
        for (b, rel) in batch.relevant.iter().enumerate() {
            for (c, &r) in rel.iter().enumerate() {
                targets[b * width + c] = if r { 1.0 } else { 0.0 };
                weights[b * width + c] = 1.0 / n_claims as f64;
            }
        }
        let loss = g.bce_logits(flat, &targets, &weights);
        (Some(loss), Some((flat, width)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = json!({
            "kind": "generator",
            "config": self.config,
            "vocab": self.vocab,
        });
        let side: Vec<(String, String)> = [
            ("kind".to_string(), "generator".to_string()),
            ("vocab_size".to_string(), self.vocab.len().to_string()),
            ("vocab_sha256".to_string(), self.vocab.hash()),
            (
                "parameters".to_string(),
                self.store.num_scalars().to_string(),
            ),
        ]
        .into_iter()
        .chain(config_pairs(&self.config))
        .collect();
        checkpoint::save(path, &header, &self.store, &side)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = checkpoint::load(path)?;
        if ck.header["kind"] != "generator" {
            return Err(Error::Checkpoint(format!(
                "{} is not a generator checkpoint",
                path.display()
            )));
        }
        let field = |k: &str| -> Result<serde_json::Value> {
            ck.header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("header lacks {k}")))
        };
        let bad = |e: serde_json::Error| Error::Checkpoint(e.to_string());
        let config: GenModelConfig = serde_json::from_value(field("config")?).map_err(bad)?;
        let vocab: Vocab = serde_json::from_value(field("vocab")?).map_err(bad)?;
        let mut model = GenModel::new(config, vocab)?;
        checkpoint::restore(&mut model.store, &ck.params)?;
        Ok(model)
    }

    /// Starting decoder input for every row.
    pub(crate) fn bos(rows: usize) -> Vec<usize> {
        vec![BOS_ID; rows]
    }
}
