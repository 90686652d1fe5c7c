//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation eagerly: each call computes its value
//! immediately and appends a node. [`Graph::backward`] walks the tape in
//! reverse and accumulates parameter gradients into a [`Grads`] buffer.

use rand::Rng;

use crate::matrix::{gemm, Matrix};
use crate::params::{Grads, ParamId, ParamStore};

/// Offset inside `ln` so that exact zeros stay finite.
pub const LOG_EPS: f64 = 1e-12;
const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Embedding(ParamId, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    RepeatRows(Var, usize),
    Reshape(Var),
    StackTime(Vec<Var>),
    AttendBank(Var, Var),
    SumAll(Var),
    SumCols(Var),
    Pick(Var, Vec<usize>),
    CopyMix {
        p_gen: Var,
        gen: Var,
        attn: Var,
        ids: Vec<usize>,
    },
    LayerNorm(Var),
    BceLogits {
        logits: Var,
        targets: Vec<f64>,
        weights: Vec<f64>,
    },
    SegmentSum(Var, Vec<Vec<(usize, usize)>>),
}

struct Node {
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Matrix>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.store.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) | Op::Embedding(..) => true,
            other => parents(other).iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, _) = self.shape(a);
        let (_, n) = self.shape(b);
        let mut out = Matrix::zeros(m, n);
        gemm(
            self.value(a),
            false,
            self.value(b),
            false,
            &mut out,
            1.0,
            0.0,
        );
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (m, _) = self.shape(a);
        let (n, _) = self.shape(b);
        let mut out = Matrix::zeros(m, n);
        gemm(
            self.value(a),
            false,
            self.value(b),
            true,
            &mut out,
            1.0,
            0.0,
        );
        self.push(out, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    /// Adds the `1 x n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(bv.rows(), 1, "add_row expects a row vector");
        assert_eq!(av.cols(), bv.cols(), "add_row width mismatch");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (x, y) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *x += y;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    /// Multiplies row `i` of `a` by `c[i]`, where `c` is `m x 1`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Var {
        let av = self.value(a);
        let cv = self.value(c);
        assert_eq!(
            cv.shape(),
            (av.rows(), 1),
            "mul_col expects an m x 1 column"
        );
        let mut out = av.clone();
        for r in 0..out.rows() {
            let f = cv.data()[r];
            out.row_mut(r).iter_mut().for_each(|x| *x *= f);
        }
        self.push(out, Op::MulCol(a, c))
    }

    pub fn scale(&mut self, a: Var, f: f64) -> Var {
        let out = self.value(a).map(|x| x * f);
        self.push(out, Op::Scale(a, f))
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        self.push(out, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// `ln(a + LOG_EPS)`
    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| (x + LOG_EPS).ln());
        self.push(out, Op::Log(a))
    }

    /// Row-wise softmax. Entries where `mask` is `<= 0.5` get probability
    /// zero; a fully masked row is all zeros.
    pub fn softmax(&mut self, a: Var, mask: Option<&Matrix>) -> Var {
        let x = self.value(a);
        if let Some(m) = mask {
            assert_eq!(m.shape(), x.shape(), "softmax mask shape mismatch");
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let keep = |c: usize| mask.is_none_or(|m| m.get(r, c) > 0.5);
            let row = x.row(r);
            let max = (0..row.len())
                .filter(|&c| keep(c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let orow = out.row_mut(r);
            let mut total = 0.0;
            for c in 0..row.len() {
                if keep(c) {
                    let e = (row[c] - max).exp();
                    orow[c] = e;
                    total += e;
                }
            }
            orow.iter_mut().for_each(|v| *v /= total);
        }
        self.push(out, Op::Softmax(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        assert!(start <= end && end <= av.cols(), "slice_cols out of range");
        let mut out = Matrix::zeros(av.rows(), end - start);
        for r in 0..av.rows() {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..end]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        self.push(
            Matrix::from_vec(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        assert!(start <= end && end <= av.rows(), "slice_rows out of range");
        let cols = av.cols();
        let out = Matrix::from_vec(
            end - start,
            cols,
            av.data()[start * cols..end * cols].to_vec(),
        );
        self.push(out, Op::SliceRows(a, start))
    }

    /// Looks up rows of an embedding table.
    pub fn embedding(&mut self, table: ParamId, ids: &[usize]) -> Var {
        let t = self.store.get(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Embedding(table, ids.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros(idx.len(), av.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(av.row(i));
        }
        self.push(out, Op::GatherRows(a, idx.to_vec()))
    }

    /// Each row repeated `times` times consecutively.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let av = self.value(a);
        let mut out = Matrix::zeros(av.rows() * times, av.cols());
        for r in 0..av.rows() {
            for k in 0..times {
                out.row_mut(r * times + k).copy_from_slice(av.row(r));
            }
        }
        self.push(out, Op::RepeatRows(a, times))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let out = self.value(a).clone().reshaped(rows, cols);
        self.push(out, Op::Reshape(a))
    }

    /// Stacks `L` time-major `B x H` matrices into a `(B·L) x H` memory bank
    /// where row `b·L + t` holds step `t` of batch row `b`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Var {
        assert!(!steps.is_empty(), "stack_time of nothing");
        let len = steps.len();
        let (b, h) = self.shape(steps[0]);
        let mut out = Matrix::zeros(b * len, h);
        for (t, &s) in steps.iter().enumerate() {
            let sv = self.value(s);
            for r in 0..b {
                out.row_mut(r * len + t).copy_from_slice(sv.row(r));
            }
        }
        self.push(out, Op::StackTime(steps.to_vec()))
    }

    /// Attention read-out: `out[b] = Σ_l attn[b, l] · bank[b·L + l]`.
    pub fn attend_bank(&mut self, attn: Var, bank: Var) -> Var {
        let av = self.value(attn);
        let bv = self.value(bank);
        let (b, len) = av.shape();
        assert_eq!(bv.rows(), b * len, "bank rows must equal B·L");
        let h = bv.cols();
        let mut out = Matrix::zeros(b, h);
        for r in 0..b {
            let orow = out.row_mut(r);
            for l in 0..len {
                let w = av.get(r, l);
                if w != 0.0 {
                    for (o, x) in orow.iter_mut().zip(bv.row(r * len + l)) {
                        *o += w * x;
                    }
                }
            }
        }
        self.push(out, Op::AttendBank(attn, bank))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::scalar(s), Op::SumAll(a))
    }

    /// Row sums as an `m x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Matrix::column((0..av.rows()).map(|r| av.row(r).iter().sum()).collect());
        self.push(out, Op::SumCols(a))
    }

    /// `out[i] = a[i, idx[i]]` as an `m x 1` column.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        assert_eq!(idx.len(), av.rows(), "pick needs one index per row");
        let out = Matrix::column(idx.iter().enumerate().map(|(r, &c)| av.get(r, c)).collect());
        self.push(out, Op::Pick(a, idx.to_vec()))
    }

    /// Pointer-generator mixture over an extended vocabulary of width `ext_size`:
    /// `P(w) = p_gen · gen(w) + (1 − p_gen) · Σ_{l: ids[b,l] = w} attn[b, l]`.
    ///
    /// `p_gen` is `B x 1`, `gen` is `B x V`, `attn` is `B x L`, and `ids` holds
    /// the `B·L` extended-vocabulary ids of the attended positions, row-major.
    pub fn copy_mix(
        &mut self,
        p_gen: Var,
        gen: Var,
        attn: Var,
        ids: &[usize],
        ext_size: usize,
    ) -> Var {
        let pv = self.value(p_gen);
        let gv = self.value(gen);
        let av = self.value(attn);
        let (b, v) = gv.shape();
        let len = av.cols();
        assert_eq!(pv.shape(), (b, 1), "p_gen must be B x 1");
        assert_eq!(av.rows(), b, "attention rows must match batch");
        assert_eq!(ids.len(), b * len, "need one id per attended position");
        assert!(ext_size >= v, "extended vocabulary smaller than base");
        let mut out = Matrix::zeros(b, ext_size);
        for r in 0..b {
            let p = pv.data()[r];
            let orow = out.row_mut(r);
            for (o, g) in orow.iter_mut().zip(gv.row(r)) {
                *o = p * g;
            }
            for l in 0..len {
                let id = ids[r * len + l];
                assert!(id < ext_size, "copy id outside the extended vocabulary");
                orow[id] += (1.0 - p) * av.get(r, l);
            }
        }
        self.push(
            out,
            Op::CopyMix {
                p_gen,
                gen,
                attn,
                ids: ids.to_vec(),
            },
        )
    }

    /// Normalizes every row to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let (mean, inv) = row_stats(row);
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
        }
        self.push(out, Op::LayerNorm(a))
    }

    /// `Σ_i w_i · BCE(σ(x_i), y_i)` computed stably from logits, as a scalar.
    pub fn bce_logits(&mut self, logits: Var, targets: &[f64], weights: &[f64]) -> Var {
        let xv = self.value(logits);
        assert_eq!(xv.cols(), 1, "bce_logits expects a column of logits");
        assert_eq!(targets.len(), xv.rows());
        assert_eq!(weights.len(), xv.rows());
        let loss = xv
            .data()
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((&x, &y), &w)| w * (softplus(x) - y * x))
            .sum();
        self.push(
            Matrix::scalar(loss),
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
        )
    }

    /// Sums column ranges per row: `out[b, c] = Σ_{l ∈ segments[b][c]} a[b, l]`.
    /// Rows with fewer than `width` segments are zero-padded.
    pub fn segment_sum(&mut self, a: Var, segments: &[Vec<(usize, usize)>], width: usize) -> Var {
        let av = self.value(a);
        assert_eq!(segments.len(), av.rows(), "one segment list per row");
        let mut out = Matrix::zeros(av.rows(), width);
        for (r, segs) in segments.iter().enumerate() {
            assert!(segs.len() <= width, "more segments than output width");
            for (c, &(s, e)) in segs.iter().enumerate() {
                out.set(r, c, av.row(r)[s..e].iter().sum());
            }
        }
        self.push(out, Op::SegmentSum(a, segments.to_vec()))
    }

    /// Inverted dropout with keep probability `keep`; identity when `keep >= 1`.
    pub fn dropout<R: Rng>(&mut self, a: Var, keep: f64, rng: &mut R) -> Var {
        if keep >= 1.0 {
            return a;
        }
        let (r, c) = self.shape(a);
        let mask = Matrix::from_vec(
            r,
            c,
            (0..r * c)
                .map(|_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
        let m = self.constant(mask);
        self.mul(a, m)
    }

    /// Accumulates `d loss / d param` into `grads`. `loss` must be 1x1.
    pub fn backward(&self, loss: Var, grads: &mut Grads) {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(dy) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let send = |v: Var, g: Matrix, adj: &mut Vec<Option<Matrix>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => grads.get_mut(*id).add_assign(&dy),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        let mut da = Matrix::zeros(av.rows(), av.cols());
                        gemm(&dy, false, bv, true, &mut da, 1.0, 0.0);
                        send(*a, da, &mut adj);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut db = Matrix::zeros(bv.rows(), bv.cols());
                        gemm(av, true, &dy, false, &mut db, 1.0, 0.0);
                        send(*b, db, &mut adj);
                    }
                }
                Op::MatMulBt(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        let mut da = Matrix::zeros(av.rows(), av.cols());
                        gemm(&dy, false, bv, false, &mut da, 1.0, 0.0);
                        send(*a, da, &mut adj);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut db = Matrix::zeros(bv.rows(), bv.cols());
                        gemm(&dy, true, av, false, &mut db, 1.0, 0.0);
                        send(*b, db, &mut adj);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, dy.clone(), &mut adj);
                    send(*b, dy, &mut adj);
                }
                Op::Sub(a, b) => {
                    send(*a, dy.clone(), &mut adj);
                    send(*b, dy.map(|x| -x), &mut adj);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    send(*a, dy.zip_map(bv, |g, y| g * y), &mut adj);
                    send(*b, dy.zip_map(av, |g, x| g * x), &mut adj);
                }
                Op::AddRow(a, b) => {
                    let mut db = Matrix::zeros(1, dy.cols());
                    for r in 0..dy.rows() {
                        for (d, g) in db.data_mut().iter_mut().zip(dy.row(r)) {
                            *d += g;
                        }
                    }
                    send(*b, db, &mut adj);
                    send(*a, dy, &mut adj);
                }
                Op::MulCol(a, c) => {
                    let (av, cv) = (self.value(*a), self.value(*c));
                    let mut da = dy.clone();
                    let mut dc = Matrix::zeros(cv.rows(), 1);
                    for r in 0..dy.rows() {
                        let f = cv.data()[r];
                        da.row_mut(r).iter_mut().for_each(|x| *x *= f);
                        dc.data_mut()[r] =
                            dy.row(r).iter().zip(av.row(r)).map(|(g, x)| g * x).sum();
                    }
                    send(*a, da, &mut adj);
                    send(*c, dc, &mut adj);
                }
                Op::Scale(a, f) => send(*a, dy.map(|g| g * f), &mut adj),
                Op::OneMinus(a) => send(*a, dy.map(|g| -g), &mut adj),
                Op::Sigmoid(a) => {
                    let y = self.value(Var(i));
                    send(*a, dy.zip_map(y, |g, y| g * y * (1.0 - y)), &mut adj);
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(i));
                    send(*a, dy.zip_map(y, |g, y| g * (1.0 - y * y)), &mut adj);
                }
                Op::Relu(a) => {
                    let y = self.value(Var(i));
                    send(
                        *a,
                        dy.zip_map(y, |g, y| if y > 0.0 { g } else { 0.0 }),
                        &mut adj,
                    );
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    send(*a, dy.zip_map(x, |g, x| g / (x + LOG_EPS)), &mut adj);
                }
                Op::Softmax(a) => {
                    let y = self.value(Var(i));
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = dy.row(r).iter().zip(y.row(r)).map(|(g, p)| g * p).sum();
                        for ((d, g), p) in da.row_mut(r).iter_mut().zip(dy.row(r)).zip(y.row(r)) {
                            *d = p * (g - dot);
                        }
                    }
                    send(*a, da, &mut adj);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        if self.nodes[p.0].needs_grad {
                            let mut dp = Matrix::zeros(dy.rows(), w);
                            for r in 0..dy.rows() {
                                dp.row_mut(r)
                                    .copy_from_slice(&dy.row(r)[offset..offset + w]);
                            }
                            send(p, dp, &mut adj);
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        da.row_mut(r)[*start..*start + dy.cols()].copy_from_slice(dy.row(r));
                    }
                    send(*a, da, &mut adj);
                }
                Op::ConcatRows(parts) => {
                    let cols = dy.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.shape(p).0;
                        if self.nodes[p.0].needs_grad {
                            let data = dy.data()[offset * cols..(offset + rows) * cols].to_vec();
                            send(p, Matrix::from_vec(rows, cols, data), &mut adj);
                        }
                        offset += rows;
                    }
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    da.data_mut()[start * cols..(start + dy.rows()) * cols]
                        .copy_from_slice(dy.data());
                    send(*a, da, &mut adj);
                }
                Op::Embedding(table, ids) => {
                    let g = grads.get_mut(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        for (d, x) in g.row_mut(id).iter_mut().zip(dy.row(r)) {
                            *d += x;
                        }
                    }
                }
                Op::GatherRows(a, idx) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    for (r, &src) in idx.iter().enumerate() {
                        for (d, x) in da.row_mut(src).iter_mut().zip(dy.row(r)) {
                            *d += x;
                        }
                    }
                    send(*a, da, &mut adj);
                }
                Op::RepeatRows(a, times) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        for k in 0..*times {
                            for (d, x) in da.row_mut(r).iter_mut().zip(dy.row(r * times + k)) {
                                *d += x;
                            }
                        }
                    }
                    send(*a, da, &mut adj);
                }
                Op::Reshape(a) => {
                    let (rows, cols) = self.shape(*a);
                    send(*a, dy.reshaped(rows, cols), &mut adj);
                }
                Op::StackTime(steps) => {
                    let len = steps.len();
                    for (t, &s) in steps.iter().enumerate() {
                        if !self.nodes[s.0].needs_grad {
                            continue;
                        }
                        let (b, h) = self.shape(s);
                        let mut ds = Matrix::zeros(b, h);
                        for r in 0..b {
                            ds.row_mut(r).copy_from_slice(dy.row(r * len + t));
                        }
                        send(s, ds, &mut adj);
                    }
                }
                Op::AttendBank(attn, bank) => {
                    let (av, bv) = (self.value(*attn), self.value(*bank));
                    let (b, len) = av.shape();
                    let mut da = Matrix::zeros(b, len);
                    let mut db = Matrix::zeros(bv.rows(), bv.cols());
                    for r in 0..b {
                        let g = dy.row(r);
                        for l in 0..len {
                            let row = r * len + l;
                            da.set(r, l, g.iter().zip(bv.row(row)).map(|(x, y)| x * y).sum());
                            let w = av.get(r, l);
                            for (d, x) in db.row_mut(row).iter_mut().zip(g) {
                                *d += w * x;
                            }
                        }
                    }
                    send(*attn, da, &mut adj);
                    send(*bank, db, &mut adj);
                }
                Op::SumAll(a) => {
                    let (rows, cols) = self.shape(*a);
                    send(*a, Matrix::filled(rows, cols, dy.item()), &mut adj);
                }
                Op::SumCols(a) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let g = dy.data()[r];
                        da.row_mut(r).iter_mut().for_each(|x| *x = g);
                    }
                    send(*a, da, &mut adj);
                }
                Op::Pick(a, idx) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    for (r, &c) in idx.iter().enumerate() {
                        da.set(r, c, dy.data()[r]);
                    }
                    send(*a, da, &mut adj);
                }
                Op::CopyMix {
                    p_gen,
                    gen,
                    attn,
                    ids,
                } => {
                    let (pv, gv, av) = (self.value(*p_gen), self.value(*gen), self.value(*attn));
                    let (b, v) = gv.shape();
                    let len = av.cols();
                    let mut dp = Matrix::zeros(b, 1);
                    let mut dg = Matrix::zeros(b, v);
                    let mut da = Matrix::zeros(b, len);
                    for r in 0..b {
                        let p = pv.data()[r];
                        let g = dy.row(r);
                        let mut d = 0.0;
                        for (c, (&gy, &gx)) in g.iter().zip(gv.row(r)).enumerate() {
                            d += gy * gx;
                            dg.set(r, c, p * gy);
                        }
                        for l in 0..len {
                            let gy = g[ids[r * len + l]];
                            d -= gy * av.get(r, l);
                            da.set(r, l, (1.0 - p) * gy);
                        }
                        dp.data_mut()[r] = d;
                    }
                    send(*p_gen, dp, &mut adj);
                    send(*gen, dg, &mut adj);
                    send(*attn, da, &mut adj);
                }
                Op::LayerNorm(a) => {
                    let x = self.value(*a);
                    let y = self.value(Var(i));
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    let n = x.cols() as f64;
                    for r in 0..x.rows() {
                        let (_, inv) = row_stats(x.row(r));
                        let g = dy.row(r);
                        let yr = y.row(r);
                        let mean_g = g.iter().sum::<f64>() / n;
                        let mean_gy = g.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((d, &gi), &yi) in da.row_mut(r).iter_mut().zip(g).zip(yr) {
                            *d = inv * (gi - mean_g - yi * mean_gy);
                        }
                    }
                    send(*a, da, &mut adj);
                }
                Op::BceLogits {
                    logits,
                    targets,
                    weights,
                } => {
                    let xv = self.value(*logits);
                    let g = dy.item();
                    let dx = Matrix::column(
                        xv.data()
                            .iter()
                            .zip(targets)
                            .zip(weights)
                            .map(|((&x, &y), &w)| g * w * (sigmoid(x) - y))
                            .collect(),
                    );
                    send(*logits, dx, &mut adj);
                }
                Op::SegmentSum(a, segments) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    for (r, segs) in segments.iter().enumerate() {
                        for (c, &(s, e)) in segs.iter().enumerate() {
                            let g = dy.get(r, c);
                            da.row_mut(r)[s..e].iter_mut().for_each(|x| *x += g);
                        }
                    }
                    send(*a, da, &mut adj);
                }
            }
        }
    }
}

fn parents(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf | Op::Param(_) | Op::Embedding(..) => vec![],
        Op::MatMul(a, b)
        | Op::MatMulBt(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::AddRow(a, b)
        | Op::MulCol(a, b)
        | Op::AttendBank(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::OneMinus(a)
        | Op::Sigmoid(a)
        | Op::Tanh(a)
        | Op::Relu(a)
        | Op::Log(a)
        | Op::Softmax(a)
        | Op::SliceCols(a, _)
        | Op::SliceRows(a, _)
        | Op::GatherRows(a, _)
        | Op::RepeatRows(a, _)
        | Op::Reshape(a)
        | Op::SumAll(a)
        | Op::SumCols(a)
        | Op::Pick(a, _)
        | Op::LayerNorm(a)
        | Op::SegmentSum(a, _) => vec![*a],
        Op::BceLogits { logits, .. } => vec![*logits],
        Op::ConcatCols(parts) | Op::ConcatRows(parts) | Op::StackTime(parts) => parts.clone(),
        Op::CopyMix {
            p_gen, gen, attn, ..
        } => vec![*p_gen, *gen, *attn],
    }
}

fn row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
