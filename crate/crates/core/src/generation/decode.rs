//! Greedy and beam-search decoding.

use std::fmt;
use std::str::FromStr;

use pomo_nn::{Graph, Matrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::model::{DecState, GenModel, Memory};
use super::GenExample;
use crate::error::{Error, Result};
use crate::vocab::{BOS_ID, EOS_ID, PAD_ID, UNK, UNK_ID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    /// Beam search with the given width.
    Beam(usize),
}

impl FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(DecodeMode::Greedy),
            _ => match s.strip_prefix("beam:").map(str::parse) {
                Some(Ok(k)) if k > 0 => Ok(DecodeMode::Beam(k)),
                _ => Err(format!(
                    "unknown decode mode {s:?} (expected greedy or beam:K)"
                )),
            },
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeMode::Greedy => f.write_str("greedy"),
            DecodeMode::Beam(k) => write!(f, "beam:{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodeResult {
    pub tokens: Vec<String>,
    pub mode: DecodeMode,
}

/// Never emitted: these only appear on the input side.
fn emittable(id: usize) -> bool {
    id != PAD_ID && id != BOS_ID
}

fn surface(model: &GenModel, batch: &Batch, row: usize, id: usize) -> String {
    let v = model.vocab.len();
    if id < v {
        model.vocab.token(id).to_string()
    } else {
        batch.oovs[row]
            .get(id - v)
            .cloned()
            .unwrap_or_else(|| UNK.to_string())
    }
}

/// Decoder input id for an emitted extended id.
fn feed_id(model: &GenModel, id: usize) -> usize {
    if id < model.vocab.len() {
        id
    } else {
        UNK_ID
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = (f64::NEG_INFINITY, EOS_ID);
    for (id, &p) in row.iter().enumerate() {
        if emittable(id) && p > best.0 {
            best = (p, id);
        }
    }
    best.1
}

fn greedy(model: &GenModel, examples: &[&GenExample], max_len: usize) -> Result<Vec<Vec<String>>> {
    let batch = model.batch(examples)?;
    let mut g = Graph::new(&model.store);
    let mem = model.encode(&mut g, &batch, None);
    let mut state = model.initial_state(&mut g, &mem, batch.rows);
    let mut prev = GenModel::bos(batch.rows);
    let mut out: Vec<Vec<String>> = vec![Vec::new(); batch.rows];
    let mut done = vec![false; batch.rows];
    for _ in 0..max_len {
        let (dist, next) = model.step(&mut g, &mem, &state, &prev);
        state = next;
        let probs: Matrix = g.value(dist).clone();
        for r in 0..batch.rows {
            let id = argmax(probs.row(r));
            prev[r] = feed_id(model, id);
            if done[r] {
                continue;
            }
            if id == EOS_ID {
                done[r] = true;
            } else {
                out[r].push(surface(model, &batch, r, id));
            }
        }
        if done.iter().all(|&d| d) {
            break;
        }
    }
    Ok(out)
}

struct Hyp {
    ids: Vec<usize>,
    score: f64,
}

/// Beam search over one example. Finished hypotheses are ranked by mean
/// log-probability per emitted symbol (including `<eos>`).
fn beam(
    model: &GenModel,
    example: &GenExample,
    width: usize,
    max_len: usize,
) -> Result<Vec<String>> {
    let batch = model.batch(&[example])?;
    let mut g = Graph::new(&model.store);
    let mem1 = model.encode(&mut g, &batch, None);
    let mut mem: Memory = model.select_rows(&mut g, &mem1, &[0]);
    let mut state: DecState = model.initial_state(&mut g, &mem, 1);
    let mut alive = vec![Hyp {
        ids: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<(f64, Vec<usize>)> = Vec::new();
    for step in 0..max_len {
        let prev: Vec<usize> = alive
            .iter()
            .map(|h| h.ids.last().map_or(BOS_ID, |&i| feed_id(model, i)))
            .collect();
        let (dist, next) = model.step(&mut g, &mem, &state, &prev);
        let probs = g.value(dist).clone();
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (i, h) in alive.iter().enumerate() {
            let row = probs.row(i);
            let mut top: Vec<(f64, usize)> = row
                .iter()
                .enumerate()
                .filter(|&(id, &p)| emittable(id) && p > 0.0)
                .map(|(id, &p)| (p, id))
                .collect();
            top.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            top.truncate(width);
            cands.extend(top.into_iter().map(|(p, id)| (h.score + p.ln(), i, id)));
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut parents = Vec::new();
        let mut next_alive = Vec::new();
        for (score, i, id) in cands.into_iter().take(width) {
            if id == EOS_ID {
                let ids = alive[i].ids.clone();
                finished.push((score / (ids.len() + 1) as f64, ids));
            } else {
                let mut ids = alive[i].ids.clone();
                ids.push(id);
                if step + 1 == max_len {
                    finished.push((score / ids.len() as f64, ids));
                } else {
                    parents.push(i);
                    next_alive.push(Hyp { ids, score });
                }
            }
        }
        if next_alive.is_empty() || finished.len() >= width {
            break;
        }
        if parents.len() != alive.len() {
            mem = model.select_rows(&mut g, &mem1, &vec![0; parents.len()]);
        }
        state = model.reorder(&mut g, &next, &parents);
        alive = next_alive;
    }
    let best = finished
        .into_iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.0.total_cmp(&b.0).then(ib.cmp(ia)))
        .map(|(_, (_, ids))| ids)
        .unwrap_or_default();
    Ok(best
        .into_iter()
        .map(|id| surface(model, &batch, 0, id))
        .collect())
}

/// Decodes one example from `<bos>` until `<eos>` or `max_output_len` symbols.
pub fn generate_pm(
    model: &GenModel,
    example: &GenExample,
    mode: DecodeMode,
    max_output_len: usize,
) -> Result<DecodeResult> {
    let tokens = match mode {
        DecodeMode::Greedy => greedy(model, &[example], max_output_len)?
            .pop()
            .unwrap_or_default(),
        DecodeMode::Beam(0) => return Err(Error::invalid("beam width must be positive")),
        DecodeMode::Beam(k) => beam(model, example, k, max_output_len)?,
    };
    Ok(DecodeResult { tokens, mode })
}

/// Decodes every example; chunks run in parallel and results keep input order.
pub fn decode_batch(
    model: &GenModel,
    examples: &[GenExample],
    mode: DecodeMode,
    max_output_len: usize,
) -> Result<Vec<Vec<String>>> {
    let chunk = model.config.batch_size.max(1);
    let parts: Vec<Result<Vec<Vec<String>>>> = examples
        .par_chunks(chunk)
        .map(|part| match mode {
            DecodeMode::Greedy => greedy(model, &part.iter().collect::<Vec<_>>(), max_output_len),
            DecodeMode::Beam(_) => part
                .iter()
                .map(|e| generate_pm(model, e, mode, max_output_len).map(|r| r.tokens))
                .collect(),
        })
        .collect();
    let mut out = Vec::with_capacity(examples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
