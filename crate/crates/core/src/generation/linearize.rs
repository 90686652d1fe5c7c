use std::ops::Range;

use serde::Serialize;

use super::ClaimSource;
use crate::claim_select::select_top_n;
use crate::dataset::PomoInstance;
use crate::error::{Error, Result};
use crate::vocab::{Vocab, CLAIM, KEY, VALUE};

/// One instance as a flat token sequence: the previous sentence, the
/// current sentence, then every included claim as
/// `<claim> <key> key… <value> value…`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinearizedInput {
    pub tokens: Vec<String>,
    /// `(claim index in the instance, token range)` in input order.
    pub claim_spans: Vec<(usize, Range<usize>)>,
    pub context_span: Range<usize>,
    /// Length of the previous sentence, which opens the context span.
    pub prev_len: usize,
}

impl LinearizedInput {
    /// Token ranges of the claims, previous sentence, and current sentence.
    pub fn groups(&self) -> [Range<usize>; 3] {
        [
            self.context_span.end..self.tokens.len(),
            0..self.prev_len,
            self.prev_len..self.context_span.end,
        ]
    }
}

/// A linearized instance with its target, ready for the generator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenExample {
    pub id: String,
    pub input: LinearizedInput,
    pub target: Vec<String>,
    /// Relevance flag of each entry of `input.claim_spans`.
    pub relevant: Vec<bool>,
    pub sent_with_slot: String,
}

/// Indices of the claims `source` keeps, in claim order. `scores` are
/// selector scores and are required for [`ClaimSource::Ranker`].
pub fn select_claims(
    inst: &PomoInstance,
    source: ClaimSource,
    scores: Option<&[f64]>,
) -> Result<Vec<usize>> {
    let n = inst.claims.len();
    Ok(match source {
        ClaimSource::All | ClaimSource::E2e => (0..n).collect(),
        ClaimSource::Oracle => (0..n).filter(|&i| inst.claims[i].relevant).collect(),
        ClaimSource::None => Vec::new(),
        ClaimSource::Ranker(k) => {
            let scores = scores
                .ok_or_else(|| Error::invalid("ranker claim source needs selector scores"))?;
            if scores.len() != n {
                return Err(Error::invalid(format!(
                    "instance {} has {n} claims but {} selector scores",
                    inst.id,
                    scores.len()
                )));
            }
            select_top_n(scores, k).into_iter().collect()
        }
    })
}

/// Linearizes `inst` with the claims at `claims`, keeping at most `max_len`
/// tokens (the tail is cut). A context longer than `max_len` is itself cut,
/// with a warning.
pub fn linearize_claims(inst: &PomoInstance, claims: &[usize], max_len: usize) -> LinearizedInput {
    let prev: Vec<&str> = inst.prev_sentence.split_whitespace().collect();
    let curr: Vec<&str> = inst.sent_with_slot.split_whitespace().collect();
    let mut tokens: Vec<String> = prev.iter().chain(&curr).map(|s| s.to_string()).collect();
    if tokens.len() > max_len {
        log::warn!(
            "{}: context of {} tokens exceeds max_input_len {max_len}; truncating",
            inst.id,
            tokens.len()
        );
        tokens.truncate(max_len);
    }
    let context_span = 0..tokens.len();
    let prev_len = prev.len().min(tokens.len());
    let mut claim_spans = Vec::new();
    for &ci in claims {
        let c = &inst.claims[ci];
        let start = tokens.len();
        let room = max_len - start;
        if room == 0 {
            break;
        }
        let seq = [CLAIM, KEY]
            .into_iter()
            .chain(c.key.split_whitespace())
            .chain([VALUE])
            .chain(c.value.split_whitespace());
        tokens.extend(seq.take(room).map(str::to_string));
        claim_spans.push((ci, start..tokens.len()));
    }
    LinearizedInput {
        tokens,
        claim_spans,
        context_span,
        prev_len,
    }
}

pub fn linearize(
    inst: &PomoInstance,
    source: ClaimSource,
    max_len: usize,
    scores: Option<&[f64]>,
) -> Result<LinearizedInput> {
    let claims = select_claims(inst, source, scores)?;
    Ok(linearize_claims(inst, &claims, max_len))
}

/// Linearizes every instance. `scores`, when given, holds one selector score
/// vector per instance.
pub fn prepare_examples(
    instances: &[PomoInstance],
    source: ClaimSource,
    max_len: usize,
    scores: Option<&[Vec<f64>]>,
) -> Result<Vec<GenExample>> {
    if let Some(s) = scores {
        if s.len() != instances.len() {
            return Err(Error::invalid(format!(
                "{} selector score vectors for {} instances",
                s.len(),
                instances.len()
            )));
        }
    }
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let input = linearize(inst, source, max_len, scores.map(|s| s[i].as_slice()))?;
            let relevant = input
                .claim_spans
                .iter()
                .map(|(c, _)| inst.claims[*c].relevant)
                .collect();
            Ok(GenExample {
                id: inst.id.clone(),
                input,
                target: inst
                    .pm_target
                    .split_whitespace()
                    .map(str::to_string)
                    .collect(),
                relevant,
                sent_with_slot: inst.sent_with_slot.clone(),
            })
        })
        .collect()
}

/// Vocabulary over linearized inputs and targets.
pub fn build_vocab(examples: &[GenExample], size: usize) -> Vocab {
    let toks = examples
        .iter()
        .flat_map(|e| e.input.tokens.iter().chain(&e.target))
        .map(String::as_str);
    Vocab::build(toks, size)
}

/// Pointer-generator mixture over an extended vocabulary:
/// `P(w) = p_gen · gen(w) + (1 − p_gen) · Σ attention on positions holding w`.
/// `input_ids` are the extended ids of the attended positions.
pub fn copy_distribution(
    gen_dist: &[f64],
    attention: &[f64],
    input_ids: &[usize],
    p_gen: f64,
    ext_size: usize,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p_gen) {
        return Err(Error::invalid(format!("p_gen {p_gen} outside [0, 1]")));
    }
    if attention.len() != input_ids.len() || ext_size < gen_dist.len() {
        return Err(Error::invalid(
            "copy distribution inputs have inconsistent sizes",
        ));
    }
    let mut out = vec![0.0; ext_size];
    for (o, g) in out.iter_mut().zip(gen_dist) {
        *o = p_gen * g;
    }
    for (&a, &id) in attention.iter().zip(input_ids) {
        let slot = out.get_mut(id).ok_or_else(|| {
            Error::invalid(format!(
                "input id {id} outside extended vocabulary of {ext_size}"
            ))
        })?;
        *slot += (1.0 - p_gen) * a;
    }
    Ok(out)
}
