//! BiLSTM encoder-decoders: concatenated input, tri-encoder, and e2e claim
//! selection.

use pomo_nn::{
    AdditiveAttention, BiLstm, Graph, LayerStates, Linear, Lstm, Matrix, ParamId, ParamStore, Var,
};
use rand_chacha::ChaCha8Rng;

use super::batch::Batch;
use super::{Architecture, GenModelConfig};
use crate::claim_select::time_major;

#[derive(Clone, Debug)]
pub(crate) struct RnnModel {
    embedding: ParamId,
    encoders: Vec<BiLstm>,
    attentions: Vec<AdditiveAttention>,
    decoder: Lstm,
    combine: Linear,
    out: Linear,
    p_gen: Option<Linear>,
    arch: Architecture,
    hidden: usize,
    keep: f64,
}

/// Encoded source for one batch.
pub(crate) struct RnnMemory {
    /// Per input group: memory bank `(B·L) x H`, projected keys, and `B x L`
    /// attention mask.
    groups: Vec<(Var, Var, Matrix)>,
    /// Extended ids of every attended position, row-major over the
    /// concatenated groups.
    ext_ids: Vec<usize>,
    ext_size: usize,
    init: LayerStates,
}

#[derive(Clone)]
pub(crate) struct RnnState {
    layers: LayerStates,
    /// Attentional hidden state of the previous step (input feeding).
    feed: Var,
}

/// Decoder output for one step.
pub(crate) struct RnnStep {
    pub dist: Var,
    /// `B x L` attention of the first group.
    pub attn: Var,
    pub state: RnnState,
}

/// `B x L` mask over claim token positions.
pub(crate) fn claim_mask(batch: &Batch, len: usize) -> Matrix {
    let mut m = Matrix::zeros(batch.rows, len);
    for (r, segs) in batch.claim_segments.iter().enumerate() {
        for &(s, e) in segs {
            for t in s..e {
                m.set(r, t, 1.0);
            }
        }
    }
    m
}

fn gather_bank(g: &mut Graph, bank: Var, len: usize, rows: &[usize]) -> Var {
    let idx: Vec<usize> = rows.iter().flat_map(|&b| b * len..(b + 1) * len).collect();
    g.gather_rows(bank, &idx)
}

fn pick_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), m.cols());
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from_slice(m.row(r));
    }
    out
}

impl RnnModel {
    pub fn new(
        store: &mut ParamStore,
        config: &GenModelConfig,
        vocab_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let s = config.init_scale;
        let (e, h) = (config.embedding_dim, config.hidden);
        let n_groups = if config.architecture == Architecture::TriEncoder {
            3
        } else {
            1
        };
        let embedding = store.add_uniform("gen.embedding", vocab_len, e, s, rng);
        let names = ["claims", "prev", "curr"];
        let encoders = (0..n_groups)
            .map(|k| {
                let name = if n_groups == 1 {
                    "gen.encoder".to_string()
                } else {
                    format!("gen.encoder.{}", names[k])
                };
                BiLstm::new(store, &name, e, h / 2, config.layers, s, rng)
            })
            .collect();
        let attentions = (0..n_groups)
            .map(|k| {
                let name = if n_groups == 1 {
                    "gen.attn".to_string()
                } else {
                    format!("gen.attn.{}", names[k])
                };
                AdditiveAttention::new(store, &name, h, h, h, s, rng)
            })
            .collect();
        let ctx = n_groups * h;
        let decoder = Lstm::new(store, "gen.decoder", e + h, h, config.layers, s, rng);
        let combine = Linear::new(store, "gen.combine", h + ctx, h, false, s, rng);
        let out = Linear::new(store, "gen.out", h, vocab_len, true, s, rng);
        let p_gen = config
            .copy_enabled()
            .then(|| Linear::new(store, "gen.p_gen", h + ctx + e, 1, true, s, rng));
        RnnModel {
            embedding,
            encoders,
            attentions,
            decoder,
            combine,
            out,
            p_gen,
            arch: config.architecture,
            hidden: h,
            keep: config.keep_prob,
        }
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        batch: &Batch,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> RnnMemory {
        let inputs: Vec<&super::batch::Group> = if self.arch == Architecture::TriEncoder {
            batch.tri.iter().collect()
        } else {
            vec![&batch.full]
        };
        let mut groups = Vec::with_capacity(inputs.len());
        let mut finals: Vec<LayerStates> = Vec::with_capacity(inputs.len());
        for (k, group) in inputs.iter().enumerate() {
            let (ids, masks) = time_major(&group.ids);
            let xs: Vec<Var> = ids
                .iter()
                .map(|step| g.embedding(self.embedding, step))
                .collect();
            let ms: Vec<Var> = masks.into_iter().map(|m| g.constant(m)).collect();
            let keep = self.keep;
            let enc = self.encoders[k].run(g, &xs, &ms, dropout.as_deref_mut().map(|r| (keep, r)));
            let bank = g.stack_time(&enc.outputs);
            let keys = self.attentions[k].keys(g, bank);
            let mask = if self.arch == Architecture::E2eClaimSelect {
                claim_mask(batch, group.max_len())
            } else {
                group.mask()
            };
            groups.push((bank, keys, mask));
            finals.push(
                enc.finals
                    .iter()
                    .map(|&((fh, fc), (bh, bc))| {
                        (g.concat_cols(&[fh, bh]), g.concat_cols(&[fc, bc]))
                    })
                    .collect(),
            );
        }
        let init = if finals.len() == 1 {
            finals.pop().expect("one encoder")
        } else {
            let n = finals.len() as f64;
            (0..finals[0].len())
                .map(|l| {
                    let hs: Vec<Var> = finals.iter().map(|f| f[l].0).collect();
                    let cs: Vec<Var> = finals.iter().map(|f| f[l].1).collect();
                    (mean_of(g, &hs, n), mean_of(g, &cs, n))
                })
                .collect()
        };
        let mut ext_ids = Vec::new();
        for r in 0..batch.rows {
            for group in &inputs {
                let len = group.max_len();
                ext_ids.extend(
                    (0..len).map(|t| group.ext[r].get(t).copied().unwrap_or(crate::vocab::PAD_ID)),
                );
            }
        }
        RnnMemory {
            groups,
            ext_ids,
            ext_size: batch.ext_size,
            init,
        }
    }

    pub fn initial_state(&self, g: &mut Graph, mem: &RnnMemory) -> RnnState {
        let rows = g.shape(mem.init[0].0).0;
        RnnState {
            layers: mem.init.clone(),
            feed: g.constant(Matrix::zeros(rows, self.hidden)),
        }
    }

    pub fn step(
        &self,
        g: &mut Graph,
        mem: &RnnMemory,
        state: &RnnState,
        prev: &[usize],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> RnnStep {
        let x = g.embedding(self.embedding, prev);
        let input = g.concat_cols(&[x, state.feed]);
        let keep = self.keep;
        let (h, layers) = self
            .decoder
            .step(g, input, &state.layers, dropout.map(|r| (keep, r)));
        let (ctx, attns) = self.attend_all(g, mem, h);
        let hc = g.concat_cols(&[h, ctx]);
        let o = self.combine.forward(g, hc);
        let o = g.tanh(o);
        let logits = self.out.forward(g, o);
        let gen = g.softmax(logits, None);
        let dist = match &self.p_gen {
            Some(pg) => {
                let feat = g.concat_cols(&[h, ctx, x]);
                let p = pg.forward(g, feat);
                let p = g.sigmoid(p);
                let a = if attns.len() == 1 {
                    attns[0]
                } else {
                    let all = g.concat_cols(&attns);
                    g.scale(all, 1.0 / attns.len() as f64)
                };
                g.copy_mix(p, gen, a, &mem.ext_ids, mem.ext_size)
            }
            None => gen,
        };
        RnnStep {
            dist,
            attn: attns[0],
            state: RnnState { layers, feed: o },
        }
    }

    /// One attention per input group, contexts concatenated in group order
    /// (claims, previous, current for the tri-encoder).
    pub fn attend_all(&self, g: &mut Graph, mem: &RnnMemory, query: Var) -> (Var, Vec<Var>) {
        let mut contexts = Vec::with_capacity(mem.groups.len());
        let mut attns = Vec::with_capacity(mem.groups.len());
        for (k, (bank, keys, mask)) in mem.groups.iter().enumerate() {
            let (c, a) = self.attentions[k].attend(g, *keys, *bank, query, mask);
            contexts.push(c);
            attns.push(a);
        }
        let ctx = if contexts.len() == 1 {
            contexts[0]
        } else {
            g.concat_cols(&contexts)
        };
        (ctx, attns)
    }

    /// Memory restricted (or replicated) to batch rows `rows`.
    pub fn select_rows(&self, g: &mut Graph, mem: &RnnMemory, rows: &[usize]) -> RnnMemory {
        let groups = mem
            .groups
            .iter()
            .map(|(bank, keys, mask)| {
                let len = mask.cols();
                (
                    gather_bank(g, *bank, len, rows),
                    gather_bank(g, *keys, len, rows),
                    pick_rows(mask, rows),
                )
            })
            .collect();
        let width: usize = mem.groups.iter().map(|(_, _, m)| m.cols()).sum();
        RnnMemory {
            groups,
            ext_ids: rows
                .iter()
                .flat_map(|&b| mem.ext_ids[b * width..(b + 1) * width].iter().copied())
                .collect(),
            ext_size: mem.ext_size,
            init: mem
                .init
                .iter()
                .map(|&(h, c)| (g.gather_rows(h, rows), g.gather_rows(c, rows)))
                .collect(),
        }
    }

    pub fn reorder(&self, g: &mut Graph, state: &RnnState, rows: &[usize]) -> RnnState {
        RnnState {
            layers: state
                .layers
                .iter()
                .map(|&(h, c)| (g.gather_rows(h, rows), g.gather_rows(c, rows)))
                .collect(),
            feed: g.gather_rows(state.feed, rows),
        }
    }
}

fn mean_of(g: &mut Graph, vs: &[Var], n: f64) -> Var {
    let mut acc = vs[0];
    for &v in &vs[1..] {
        acc = g.add(acc, v);
    }
    g.scale(acc, 1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::batch::make_batch;
    use crate::generation::model::tests::micro_config;
    use crate::generation::{build_vocab, prepare_examples, GenExample};
    use crate::synthetic::copy_task;
    use rand::SeedableRng;

    #[test]
    fn tri_encoder_groups_feed_separate_context_slices() {
        let config = micro_config(Architecture::TriEncoder);
        let examples = prepare_examples(&copy_task(4, 3), config.claim_source, 100, None).unwrap();
        let vocab = build_vocab(&examples, 40);
        let mut store = ParamStore::new();
        let model = RnnModel::new(
            &mut store,
            &config,
            vocab.len(),
            &mut ChaCha8Rng::seed_from_u64(5),
        );
        let refs: Vec<&GenExample> = examples.iter().collect();
        let batch = make_batch(&refs, &vocab, true, 6).unwrap();
        let mut g = Graph::new(&store);
        let mut mem = model.encode(&mut g, &batch, None);
        let query = g.constant(Matrix::from_fn(batch.rows, config.hidden, |r, c| {
            ((r * 7 + c) as f64).sin()
        }));
        let (before, attns) = model.attend_all(&mut g, &mem, query);
        assert_eq!(attns.len(), 3);
        let before = g.value(before).clone();

        let (bank, _, mask) = &mem.groups[2];
        let (rows, cols) = g.shape(*bank);
        let bank = g.constant(Matrix::from_fn(rows, cols, |r, c| {
            ((r + 3 * c) as f64).cos()
        }));
        let keys = model.attentions[2].keys(&mut g, bank);
        mem.groups[2] = (bank, keys, mask.clone());
        let (after, _) = model.attend_all(&mut g, &mem, query);
        let after = g.value(after);

        let h = config.hidden;
        assert_eq!(after.cols(), 3 * h);
        for r in 0..batch.rows {
            assert_eq!(&before.row(r)[..2 * h], &after.row(r)[..2 * h]);
            assert_ne!(&before.row(r)[2 * h..], &after.row(r)[2 * h..]);
        }
    }
}
