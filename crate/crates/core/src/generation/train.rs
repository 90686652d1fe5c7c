use pomo_nn::{Adam, Grads, Graph, LrSchedule, Optimizer, ParamStore, Sgd};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::decode::{decode_batch, DecodeMode};
use super::linearize::build_vocab;
use super::model::GenModel;
use super::{GenExample, GenModelConfig};
use crate::claim_select::OptimizerKind;
use crate::error::{Error, Result};
use crate::eval_metrics::{corpus_bow_prf, Prf};

/// Keeps the position of the best score seen so far; ties keep the earlier one.
#[derive(Clone, Debug, Default)]
pub struct BestTracker {
    best: Option<(f64, usize)>,
}

impl BestTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `score` at `step`; true when it is a new best.
    pub fn observe(&mut self, step: usize, score: f64) -> bool {
        let better = self.best.is_none_or(|(s, _)| score > s);
        if better {
            self.best = Some((score, step));
        }
        better
    }

    pub fn best(&self) -> Option<(f64, usize)> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalLog {
    pub step: usize,
    /// Mean training loss since the previous evaluation.
    pub train_loss: f64,
    pub valid: Prf,
}

pub struct TrainedGenerator {
    pub model: GenModel,
    pub log: Vec<EvalLog>,
    pub best_step: usize,
}

/// Corpus bag-of-words scores of `mode` decodes against the targets.
pub fn evaluate_examples(
    model: &GenModel,
    examples: &[GenExample],
    mode: DecodeMode,
) -> Result<(Prf, Vec<Vec<String>>)> {
    let preds = decode_batch(model, examples, mode, model.config.max_output_len)?;
    let joined: Vec<(String, String)> = preds
        .iter()
        .zip(examples)
        .map(|(p, e)| (p.join(" "), e.target.join(" ")))
        .collect();
    let prf = corpus_bow_prf(joined.iter().map(|(p, t)| (p.as_str(), t.as_str())));
    Ok((prf, preds))
}

fn optimizer(config: &GenModelConfig) -> Box<dyn Optimizer> {
    match config.optimizer {
        OptimizerKind::Sgd => Box::new(Sgd::new(config.learning_rate)),
        OptimizerKind::Adam => {
            let schedule = if config.warmup_steps == 0 {
                LrSchedule::Constant
            } else {
                let model_dim = if config.architecture.is_recurrent() {
                    config.hidden
                } else {
                    config.model_dim
                };
                LrSchedule::Noam {
                    model_dim,
                    warmup: config.warmup_steps,
                }
            };
            Box::new(Adam::new(config.learning_rate, schedule))
        }
    }
}

/// Trains for `total_steps` mini-batches, evaluating greedy decodes on
/// `valid` every `eval_every` steps and at the end; returns the parameters
/// of the best-F1 evaluation.
pub fn train_generator(
    train: &[GenExample],
    valid: &[GenExample],
    config: &GenModelConfig,
) -> Result<TrainedGenerator> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid(
            "generator training needs a non-empty train set",
        ));
    }
    if valid.is_empty() {
        return Err(Error::invalid(
            "generator training needs a non-empty validation set",
        ));
    }
    let vocab = build_vocab(train, config.vocab_size);
    let mut model = GenModel::new(config.clone(), vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = optimizer(config);
    let mut grads = Grads::zeros_like(&model.store);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut tracker = BestTracker::new();
    let mut best_store: Option<ParamStore> = None;
    let mut log = Vec::new();
    let (mut total, mut count) = (0.0, 0usize);
    for step in 1..=config.total_steps {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let batch: Vec<&GenExample> = order[cursor..end].iter().map(|&i| &train[i]).collect();
        cursor = end;
        grads.zero();
        let value = {
            let mut g = Graph::new(&model.store);
            let parts = model.loss(&mut g, &batch, Some(&mut rng))?;
            g.backward(parts.total, &mut grads);
            g.value(parts.total).item()
        };
        if !value.is_finite() {
            return Err(Error::invalid(format!(
                "training loss became {value} at step {step}"
            )));
        }
        grads.clip_global_norm(config.max_grad_norm);
        opt.step(&mut model.store, &grads);
        total += value;
        count += 1;
        if step % config.eval_every == 0 || step == config.total_steps {
            let (prf, _) = evaluate_examples(&model, valid, DecodeMode::Greedy)?;
            let train_loss = total / count as f64;
            log::info!(
                "generator step {step}: loss {train_loss:.4} valid F1 {:.4}",
                prf.f1
            );
            log.push(EvalLog {
                step,
                train_loss,
                valid: prf,
            });
            if tracker.observe(step, prf.f1) {
                best_store = Some(model.store.clone());
            }
            (total, count) = (0.0, 0);
        }
    }
    let (_, best_step) = tracker.best().expect("at least one evaluation");
    model.store = best_store.expect("a best evaluation stores parameters");
    Ok(TrainedGenerator {
        model,
        log,
        best_step,
    })
}

/// Soft claim selection probabilities `σ(s_c)` of an e2e model under teacher
/// forcing, one vector per example in `claim_spans` order.
pub fn claim_probabilities(model: &GenModel, examples: &[GenExample]) -> Result<Vec<Vec<f64>>> {
    if model.config.architecture != super::Architecture::E2eClaimSelect {
        return Err(Error::invalid(
            "claim probabilities exist only for the e2e architecture",
        ));
    }
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(model.config.batch_size.max(1)) {
        let refs: Vec<&GenExample> = chunk.iter().collect();
        let mut g = Graph::new(&model.store);
        let parts = model.loss(&mut g, &refs, None)?;
        match parts.claim_scores {
            Some((scores, width)) => {
                let v = g.value(scores).data();
                for (b, e) in chunk.iter().enumerate() {
                    out.push(
                        (0..e.input.claim_spans.len())
                            .map(|c| pomo_nn::sigmoid(v[b * width + c]))
                            .collect(),
                    );
                }
            }
            None => out.extend(chunk.iter().map(|_| Vec::new())),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_tracker_is_an_argmax() {
        let mut t = BestTracker::new();
        for (step, f1) in [0.2, 0.5, 0.4].into_iter().enumerate() {
            t.observe(step + 1, f1);
        }
        assert_eq!(t.best(), Some((0.5, 2)));
        assert!(!t.observe(4, 0.5));
    }
}
