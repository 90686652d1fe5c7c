//! Reusable layers built on [`Graph`] ops. Recurrent layers work on
//! time-major batches: one `B x D` matrix per step plus a `B x 1` mask that
//! is 1 while the row's sequence is still running.

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::matrix::Matrix;
use crate::params::{ParamId, ParamStore};

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        output_dim: usize,
        bias: bool,
        init_scale: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(
            format!("{name}.weight"),
            input_dim,
            output_dim,
            init_scale,
            rng,
        );
        let bias = bias.then(|| store.add_zeros(format!("{name}.bias"), 1, output_dim));
        Linear {
            weight,
            bias,
            input_dim,
            output_dim,
        }
    }

    pub fn xavier<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        output_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_xavier(format!("{name}.weight"), input_dim, output_dim, rng);
        let bias = bias.then(|| store.add_zeros(format!("{name}.bias"), 1, output_dim));
        Linear {
            weight,
            bias,
            input_dim,
            output_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }
}

/// One LSTM cell with fused gate weights over `[input; hidden]`.
/// Gate order in the fused matrix is input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(
            format!("{name}.weight"),
            input_dim + hidden,
            4 * hidden,
            init_scale,
            rng,
        );
        let mut b = Matrix::zeros(1, 4 * hidden);
        b.data_mut()[hidden..2 * hidden]
            .iter_mut()
            .for_each(|x| *x = 1.0);
        let bias = store.add(format!("{name}.bias"), b);
        LstmCell {
            weight,
            bias,
            input_dim,
            hidden,
        }
    }

    /// One step. Rows whose `mask` is 0 keep their previous state.
    pub fn step(&self, g: &mut Graph, x: Var, state: (Var, Var), mask: Option<Var>) -> (Var, Var) {
        let (h, c) = state;
        let hs = self.hidden;
        let xh = g.concat_cols(&[x, h]);
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let pre = g.matmul(xh, w);
        let pre = g.add_row(pre, b);
        let i_pre = g.slice_cols(pre, 0, hs);
        let f_pre = g.slice_cols(pre, hs, 2 * hs);
        let c_pre = g.slice_cols(pre, 2 * hs, 3 * hs);
        let o_pre = g.slice_cols(pre, 3 * hs, 4 * hs);
        let i = g.sigmoid(i_pre);
        let f = g.sigmoid(f_pre);
        let cand = g.tanh(c_pre);
        let o = g.sigmoid(o_pre);
        let fc = g.mul(f, c);
        let ic = g.mul(i, cand);
        let c_new = g.add(fc, ic);
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc);
        match mask {
            Some(m) => (blend(g, h, h_new, m), blend(g, c, c_new, m)),
            None => (h_new, c_new),
        }
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> (Var, Var) {
        let h = g.constant(Matrix::zeros(batch, self.hidden));
        let c = g.constant(Matrix::zeros(batch, self.hidden));
        (h, c)
    }

    /// Runs over a whole sequence, optionally right-to-left. Outputs are
    /// returned in original time order.
    pub fn run(
        &self,
        g: &mut Graph,
        inputs: &[Var],
        masks: &[Var],
        reverse: bool,
        init: Option<(Var, Var)>,
    ) -> (Vec<Var>, (Var, Var)) {
        assert_eq!(inputs.len(), masks.len(), "one mask per step");
        let batch = match inputs.first() {
            Some(&x) => g.shape(x).0,
            None => {
                let s = init.expect("empty sequence needs an initial state");
                return (Vec::new(), s);
            }
        };
        let mut state = init.unwrap_or_else(|| self.zero_state(g, batch));
        let mut outputs = vec![None; inputs.len()];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..inputs.len()).rev())
        } else {
            Box::new(0..inputs.len())
        };
        for t in order {
            state = self.step(g, inputs[t], state, Some(masks[t]));
            outputs[t] = Some(state.0);
        }
        (outputs.into_iter().map(Option::unwrap).collect(), state)
    }
}

/// `old + m ⊙ (new − old)` with a `B x 1` mask.
fn blend(g: &mut Graph, old: Var, new: Var, mask: Var) -> Var {
    let d = g.sub(new, old);
    let d = g.mul_col(d, mask);
    g.add(old, d)
}

/// Stacked unidirectional LSTM.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub cells: Vec<LstmCell>,
}

/// Final `(h, c)` of every layer, bottom first.
pub type LayerStates = Vec<(Var, Var)>;

impl Lstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        layers: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Self {
        let cells = (0..layers)
            .map(|l| {
                let d = if l == 0 { input_dim } else { hidden };
                LstmCell::new(store, &format!("{name}.l{l}"), d, hidden, init_scale, rng)
            })
            .collect();
        Lstm { cells }
    }

    pub fn hidden(&self) -> usize {
        self.cells[0].hidden
    }

    /// `dropout` is `(keep, rng)` applied between layers.
    pub fn run<R: Rng>(
        &self,
        g: &mut Graph,
        inputs: &[Var],
        masks: &[Var],
        init: Option<&LayerStates>,
        mut dropout: Option<(f64, &mut R)>,
    ) -> (Vec<Var>, LayerStates) {
        let mut xs = inputs.to_vec();
        let mut finals = Vec::with_capacity(self.cells.len());
        for (l, cell) in self.cells.iter().enumerate() {
            if l > 0 {
                if let Some((keep, rng)) = dropout.as_mut() {
                    xs = xs
                        .iter()
                        .map(|&x| g.dropout(x, *keep, &mut **rng))
                        .collect();
                }
            }
            let (out, fin) = cell.run(g, &xs, masks, false, init.map(|s| s[l]));
            xs = out;
            finals.push(fin);
        }
        (xs, finals)
    }

    /// One decoding step through every layer.
    pub fn step<R: Rng>(
        &self,
        g: &mut Graph,
        x: Var,
        states: &LayerStates,
        mut dropout: Option<(f64, &mut R)>,
    ) -> (Var, LayerStates) {
        let mut input = x;
        let mut next = Vec::with_capacity(self.cells.len());
        for (l, cell) in self.cells.iter().enumerate() {
            if l > 0 {
                if let Some((keep, rng)) = dropout.as_mut() {
                    input = g.dropout(input, *keep, &mut **rng);
                }
            }
            let s = cell.step(g, input, states[l], None);
            input = s.0;
            next.push(s);
        }
        (input, next)
    }
}

/// Stacked bidirectional LSTM; each layer sees the concatenated outputs of
/// both directions of the layer below.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub layers: Vec<(LstmCell, LstmCell)>,
}

pub struct BiLstmOutput {
    /// Per step, `[forward; backward]` of the top layer.
    pub outputs: Vec<Var>,
    /// Per layer, final forward state and final backward state.
    pub finals: Vec<((Var, Var), (Var, Var))>,
}

impl BiLstm {
    /// `hidden_per_direction` is the width of each direction.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_per_direction: usize,
        layers: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let d = if l == 0 {
                    input_dim
                } else {
                    2 * hidden_per_direction
                };
                (
                    LstmCell::new(
                        store,
                        &format!("{name}.l{l}.fwd"),
                        d,
                        hidden_per_direction,
                        init_scale,
                        rng,
                    ),
                    LstmCell::new(
                        store,
                        &format!("{name}.l{l}.bwd"),
                        d,
                        hidden_per_direction,
                        init_scale,
                        rng,
                    ),
                )
            })
            .collect();
        BiLstm { layers }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.layers[0].0.hidden
    }

    pub fn run<R: Rng>(
        &self,
        g: &mut Graph,
        inputs: &[Var],
        masks: &[Var],
        mut dropout: Option<(f64, &mut R)>,
    ) -> BiLstmOutput {
        let mut xs = inputs.to_vec();
        let mut finals = Vec::with_capacity(self.layers.len());
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            if l > 0 {
                if let Some((keep, rng)) = dropout.as_mut() {
                    xs = xs
                        .iter()
                        .map(|&x| g.dropout(x, *keep, &mut **rng))
                        .collect();
                }
            }
            let (fo, fs) = fwd.run(g, &xs, masks, false, None);
            let (bo, bs) = bwd.run(g, &xs, masks, true, None);
            xs = fo
                .iter()
                .zip(&bo)
                .map(|(&f, &b)| g.concat_cols(&[f, b]))
                .collect();
            finals.push((fs, bs));
        }
        BiLstmOutput {
            outputs: xs,
            finals,
        }
    }
}

/// Additive (Bahdanau-style) attention over a `(B·L) x H` memory bank.
#[derive(Clone, Debug)]
pub struct AdditiveAttention {
    pub key: Linear,
    pub query: Linear,
    pub score: ParamId,
}

impl AdditiveAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        memory_dim: usize,
        query_dim: usize,
        attn_dim: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Self {
        AdditiveAttention {
            key: Linear::new(
                store,
                &format!("{name}.key"),
                memory_dim,
                attn_dim,
                false,
                init_scale,
                rng,
            ),
            query: Linear::new(
                store,
                &format!("{name}.query"),
                query_dim,
                attn_dim,
                true,
                init_scale,
                rng,
            ),
            score: store.add_uniform(format!("{name}.score"), attn_dim, 1, init_scale, rng),
        }
    }

    /// Projects the memory bank once per sequence batch.
    pub fn keys(&self, g: &mut Graph, bank: Var) -> Var {
        self.key.forward(g, bank)
    }

    /// Returns `(context B x H, weights B x L)`. `mask` is `B x L`.
    pub fn attend(
        &self,
        g: &mut Graph,
        keys: Var,
        bank: Var,
        query: Var,
        mask: &Matrix,
    ) -> (Var, Var) {
        let (b, len) = mask.shape();
        let q = self.query.forward(g, query);
        let q = g.repeat_rows(q, len);
        let e = g.add(keys, q);
        let e = g.tanh(e);
        let v = g.param(self.score);
        let s = g.matmul(e, v);
        let s = g.reshape(s, b, len);
        let a = g.softmax(s, Some(mask));
        let ctx = g.attend_bank(a, bank);
        (ctx, a)
    }
}
