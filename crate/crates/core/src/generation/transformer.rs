//! Pre-norm transformer encoder-decoder over the concatenated input, with
//! copying from the final decoder block's cross-attention (averaged over
//! heads).
//!
//! Sequences of a batch are stored as `(B·L) x D` matrices with row `b·L + t`
//! holding position `t` of row `b`.

use pomo_nn::{Graph, Linear, Matrix, ParamId, ParamStore, Var};
use rand_chacha::ChaCha8Rng;

use super::batch::Batch;
use super::GenModelConfig;
use crate::vocab::PAD_ID;

#[derive(Clone, Debug)]
struct Mha {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

impl Mha {
    fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Mha {
            q: Linear::xavier(store, &format!("{name}.q"), d, d, true, rng),
            k: Linear::xavier(store, &format!("{name}.k"), d, d, true, rng),
            v: Linear::xavier(store, &format!("{name}.v"), d, d, true, rng),
            o: Linear::xavier(store, &format!("{name}.o"), d, d, true, rng),
        }
    }
}

#[derive(Clone, Debug)]
struct Ffn {
    inner: Linear,
    outer: Linear,
}

impl Ffn {
    fn new(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Ffn {
            inner: Linear::xavier(store, &format!("{name}.inner"), d, hidden, true, rng),
            outer: Linear::xavier(store, &format!("{name}.outer"), hidden, d, true, rng),
        }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.inner.forward(g, x);
        let h = g.relu(h);
        self.outer.forward(g, h)
    }
}

#[derive(Clone, Debug)]
struct EncBlock {
    attn: Mha,
    ffn: Ffn,
}

#[derive(Clone, Debug)]
struct DecBlock {
    attn: Mha,
    cross: Mha,
    ffn: Ffn,
}

#[derive(Clone, Debug)]
pub(crate) struct TransformerModel {
    embedding: ParamId,
    encoder: Vec<EncBlock>,
    decoder: Vec<DecBlock>,
    out: Linear,
    p_gen: Option<Linear>,
    dim: usize,
    heads: usize,
    keep: f64,
}

pub(crate) struct TfMemory {
    /// `(B·L) x D` encoder output.
    states: Var,
    /// `B x L` key mask.
    mask: Matrix,
    ext_ids: Vec<usize>,
    ext_size: usize,
}

/// Sinusoidal position encodings for `rows` sequences of length `len`.
fn positions(rows: usize, len: usize, dim: usize) -> Matrix {
    let mut m = Matrix::zeros(rows * len, dim);
    for t in 0..len {
        for i in 0..dim {
            let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let v = if i % 2 == 0 {
                (t as f64 * rate).sin()
            } else {
                (t as f64 * rate).cos()
            };
            for b in 0..rows {
                m.set(b * len + t, i, v);
            }
        }
    }
    m
}

fn drop(g: &mut Graph, x: Var, keep: f64, rng: &mut Option<&mut ChaCha8Rng>) -> Var {
    match rng {
        Some(r) => g.dropout(x, keep, &mut **r),
        None => x,
    }
}

impl TransformerModel {
    pub fn new(
        store: &mut ParamStore,
        config: &GenModelConfig,
        vocab_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = config.model_dim;
        let embedding = store.add_xavier("gen.embedding", vocab_len, d, rng);
        let encoder = (0..config.blocks)
            .map(|l| EncBlock {
                attn: Mha::new(store, &format!("gen.enc{l}.attn"), d, rng),
                ffn: Ffn::new(store, &format!("gen.enc{l}.ffn"), d, config.ffn_dim, rng),
            })
            .collect();
        let decoder = (0..config.blocks)
            .map(|l| DecBlock {
                attn: Mha::new(store, &format!("gen.dec{l}.attn"), d, rng),
                cross: Mha::new(store, &format!("gen.dec{l}.cross"), d, rng),
                ffn: Ffn::new(store, &format!("gen.dec{l}.ffn"), d, config.ffn_dim, rng),
            })
            .collect();
        let out = Linear::xavier(store, "gen.out", d, vocab_len, true, rng);
        let p_gen = config
            .copy_enabled()
            .then(|| Linear::xavier(store, "gen.p_gen", 3 * d, 1, true, rng));
        TransformerModel {
            embedding,
            encoder,
            decoder,
            out,
            p_gen,
            dim: d,
            heads: config.heads,
            keep: config.transformer_keep_prob,
        }
    }

    /// Scaled embeddings plus positions for row-major id sequences of equal
    /// length `len`.
    fn embed(&self, g: &mut Graph, ids: &[usize], rows: usize, len: usize) -> Var {
        let x = g.embedding(self.embedding, ids);
        let x = g.scale(x, (self.dim as f64).sqrt());
        let p = g.constant(positions(rows, len, self.dim));
        g.add(x, p)
    }

    /// Multi-head attention. `masks[b]` is `tq x tk`. Returns the projected
    /// output and, when `want_attn`, the head-averaged weights per row.
    #[allow(clippy::too_many_arguments)]
    fn mha(
        &self,
        g: &mut Graph,
        m: &Mha,
        q_in: Var,
        kv_in: Var,
        rows: usize,
        tq: usize,
        tk: usize,
        masks: &[Matrix],
        want_attn: bool,
    ) -> (Var, Vec<Var>) {
        let dk = self.dim / self.heads;
        let q = m.q.forward(g, q_in);
        let k = m.k.forward(g, kv_in);
        let v = m.v.forward(g, kv_in);
        let scale = 1.0 / (dk as f64).sqrt();
        let mut outs = Vec::with_capacity(rows);
        let mut avg = Vec::new();
        for (b, mask) in masks.iter().enumerate().take(rows) {
            let qb = g.slice_rows(q, b * tq, (b + 1) * tq);
            let kb = g.slice_rows(k, b * tk, (b + 1) * tk);
            let vb = g.slice_rows(v, b * tk, (b + 1) * tk);
            let mut heads = Vec::with_capacity(self.heads);
            let mut weights = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = g.slice_cols(qb, h * dk, (h + 1) * dk);
                let kh = g.slice_cols(kb, h * dk, (h + 1) * dk);
                let vh = g.slice_cols(vb, h * dk, (h + 1) * dk);
                let s = g.matmul_bt(qh, kh);
                let s = g.scale(s, scale);
                let a = g.softmax(s, Some(mask));
                heads.push(g.matmul(a, vh));
                weights.push(a);
            }
            outs.push(g.concat_cols(&heads));
            if want_attn {
                let mut acc = weights[0];
                for &w in &weights[1..] {
                    acc = g.add(acc, w);
                }
                avg.push(g.scale(acc, 1.0 / self.heads as f64));
            }
        }
        let cat = g.concat_rows(&outs);
        (m.o.forward(g, cat), avg)
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        batch: &Batch,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> TfMemory {
        let group = &batch.full;
        let (rows, len) = (batch.rows, group.max_len());
        let ids: Vec<usize> = group
            .ids
            .iter()
            .flat_map(|s| (0..len).map(move |t| s.get(t).copied().unwrap_or(PAD_ID)))
            .collect();
        let mask = group.mask();
        let key_masks: Vec<Matrix> = (0..rows)
            .map(|b| {
                Matrix::from_vec(
                    len,
                    len,
                    (0..len).flat_map(|_| mask.row(b).to_vec()).collect(),
                )
            })
            .collect();
        let mut x = self.embed(g, &ids, rows, len);
        x = drop(g, x, self.keep, &mut dropout);
        for block in &self.encoder {
            let h = g.layer_norm(x);
            let (a, _) = self.mha(g, &block.attn, h, h, rows, len, len, &key_masks, false);
            let a = drop(g, a, self.keep, &mut dropout);
            x = g.add(x, a);
            let h = g.layer_norm(x);
            let f = block.ffn.forward(g, h);
            let f = drop(g, f, self.keep, &mut dropout);
            x = g.add(x, f);
        }
        let states = g.layer_norm(x);
        TfMemory {
            states,
            ext_ids: group.ext_flat(),
            ext_size: batch.ext_size,
            mask,
        }
    }

    /// Output distributions for every prefix position. `prefixes` are
    /// row-major vocabulary ids, all of length `t`; the result has `B·t`
    /// rows ordered `b·t + i`.
    pub fn decode_all(
        &self,
        g: &mut Graph,
        mem: &TfMemory,
        prefixes: &[Vec<usize>],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Var {
        let rows = prefixes.len();
        let t = prefixes[0].len();
        let len = mem.mask.cols();
        let ids: Vec<usize> = prefixes.iter().flatten().copied().collect();
        let causal = Matrix::from_vec(
            t,
            t,
            (0..t * t)
                .map(|k| if k % t <= k / t { 1.0 } else { 0.0 })
                .collect(),
        );
        let self_masks = vec![causal; rows];
        let cross_masks: Vec<Matrix> = (0..rows)
            .map(|b| {
                Matrix::from_vec(
                    t,
                    len,
                    (0..t).flat_map(|_| mem.mask.row(b).to_vec()).collect(),
                )
            })
            .collect();
        let emb = self.embed(g, &ids, rows, t);
        let mut x = drop(g, emb, self.keep, &mut dropout);
        let mut last_attn = Vec::new();
        for (l, block) in self.decoder.iter().enumerate() {
            let h = g.layer_norm(x);
            let (a, _) = self.mha(g, &block.attn, h, h, rows, t, t, &self_masks, false);
            let a = drop(g, a, self.keep, &mut dropout);
            x = g.add(x, a);
            let h = g.layer_norm(x);
            let want = l + 1 == self.decoder.len();
            let (c, attn) = self.mha(
                g,
                &block.cross,
                h,
                mem.states,
                rows,
                t,
                len,
                &cross_masks,
                want,
            );
            if want {
                last_attn = attn;
            }
            let c = drop(g, c, self.keep, &mut dropout);
            x = g.add(x, c);
            let h = g.layer_norm(x);
            let f = block.ffn.forward(g, h);
            let f = drop(g, f, self.keep, &mut dropout);
            x = g.add(x, f);
        }
        let y = g.layer_norm(x);
        let logits = self.out.forward(g, y);
        let gen = g.softmax(logits, None);
        match &self.p_gen {
            Some(pg) => {
                let ctxs: Vec<Var> = (0..rows)
                    .map(|b| {
                        let mb = g.slice_rows(mem.states, b * len, (b + 1) * len);
                        g.matmul(last_attn[b], mb)
                    })
                    .collect();
                let ctx = g.concat_rows(&ctxs);
                let attn = g.concat_rows(&last_attn);
                let feat = g.concat_cols(&[y, ctx, emb]);
                let p = pg.forward(g, feat);
                let p = g.sigmoid(p);
                let ids: Vec<usize> = (0..rows)
                    .flat_map(|b| {
                        let row = &mem.ext_ids[b * len..(b + 1) * len];
                        (0..t).flat_map(move |_| row.iter().copied())
                    })
                    .collect();
                g.copy_mix(p, gen, attn, &ids, mem.ext_size)
            }
            None => gen,
        }
    }

    pub fn select_rows(&self, g: &mut Graph, mem: &TfMemory, rows: &[usize]) -> TfMemory {
        let len = mem.mask.cols();
        let idx: Vec<usize> = rows.iter().flat_map(|&b| b * len..(b + 1) * len).collect();
        let mut mask = Matrix::zeros(rows.len(), len);
        for (i, &b) in rows.iter().enumerate() {
            mask.row_mut(i).copy_from_slice(mem.mask.row(b));
        }
        TfMemory {
            states: g.gather_rows(mem.states, &idx),
            mask,
            ext_ids: rows
                .iter()
                .flat_map(|&b| mem.ext_ids[b * len..(b + 1) * len].iter().copied())
                .collect(),
            ext_size: mem.ext_size,
        }
    }
}
