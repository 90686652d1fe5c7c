//! Numeric batches: vocabulary ids, per-row copy vocabularies, and masks.

use std::collections::HashMap;
use std::ops::Range;

use pomo_nn::Matrix;

use super::GenExample;
use crate::error::{Error, Result};
use crate::vocab::{Vocab, EOS_ID, PAD_ID, UNK_ID};

/// One encoder input per batch row. Rows are never empty; an empty range is
/// represented by a single `<pad>`.
#[derive(Clone, Debug)]
pub(crate) struct Group {
    /// Vocabulary ids (out-of-vocabulary tokens map to `<unk>`).
    pub ids: Vec<Vec<usize>>,
    /// Extended ids: out-of-vocabulary tokens get the row's copy slot.
    pub ext: Vec<Vec<usize>>,
}

impl Group {
    pub fn max_len(&self) -> usize {
        self.ids.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `B x L` mask with ones on real tokens.
    pub fn mask(&self) -> Matrix {
        let len = self.max_len();
        let mut m = Matrix::zeros(self.ids.len(), len);
        for (r, s) in self.ids.iter().enumerate() {
            for t in 0..s.len() {
                m.set(r, t, 1.0);
            }
        }
        m
    }

    /// Row-major `B·L` extended ids, padded with `<pad>`.
    pub fn ext_flat(&self) -> Vec<usize> {
        let len = self.max_len();
        self.ext
            .iter()
            .flat_map(|s| (0..len).map(move |t| s.get(t).copied().unwrap_or(PAD_ID)))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Batch {
    pub rows: usize,
    /// The whole linearized sequence.
    pub full: Group,
    /// Claims, previous sentence, current sentence.
    pub tri: [Group; 3],
    /// Claim token ranges within `full`, per row.
    pub claim_segments: Vec<Vec<(usize, usize)>>,
    pub relevant: Vec<Vec<bool>>,
    /// Copy-only tokens of each row, in extended-id order after the vocabulary.
    pub oovs: Vec<Vec<String>>,
    pub ext_size: usize,
    /// Target extended ids followed by `<eos>`.
    pub targets: Vec<Vec<usize>>,
}

struct RowIds {
    ids: Vec<usize>,
    ext: Vec<usize>,
    oovs: Vec<String>,
}

fn row_ids(tokens: &[String], vocab: &Vocab, copy: bool) -> RowIds {
    let mut ids = Vec::with_capacity(tokens.len());
    let mut ext = Vec::with_capacity(tokens.len());
    let mut oovs: Vec<String> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        match vocab.get(t) {
            Some(id) => {
                ids.push(id);
                ext.push(id);
            }
            None => {
                ids.push(UNK_ID);
                if copy {
                    let next = vocab.len() + slot.len();
                    let id = *slot.entry(t.as_str()).or_insert_with(|| {
                        oovs.push(t.clone());
                        next
                    });
                    ext.push(id);
                } else {
                    ext.push(UNK_ID);
                }
            }
        }
    }
    RowIds { ids, ext, oovs }
}

fn slice_group(rows: &[RowIds], ranges: &[Range<usize>]) -> Group {
    let pick = |v: &Vec<usize>, r: &Range<usize>| {
        if r.is_empty() {
            vec![PAD_ID]
        } else {
            v[r.clone()].to_vec()
        }
    };
    Group {
        ids: rows
            .iter()
            .zip(ranges)
            .map(|(row, r)| pick(&row.ids, r))
            .collect(),
        ext: rows
            .iter()
            .zip(ranges)
            .map(|(row, r)| pick(&row.ext, r))
            .collect(),
    }
}

/// Target ids for `target`, cut to `max_out` tokens, then `<eos>`.
pub(crate) fn target_ids(
    target: &[String],
    vocab: &Vocab,
    oovs: &[String],
    max_out: usize,
) -> Vec<usize> {
    let mut out: Vec<usize> = target
        .iter()
        .take(max_out)
        .map(|t| {
            vocab
                .get(t)
                .or_else(|| oovs.iter().position(|o| o == t).map(|k| vocab.len() + k))
                .unwrap_or(UNK_ID)
        })
        .collect();
    out.push(EOS_ID);
    out
}

pub(crate) fn make_batch(
    examples: &[&GenExample],
    vocab: &Vocab,
    copy: bool,
    max_out: usize,
) -> Result<Batch> {
    if examples.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(e) = examples.iter().find(|e| e.input.tokens.is_empty()) {
        return Err(Error::invalid(format!("{}: empty generator input", e.id)));
    }
    let rows: Vec<RowIds> = examples
        .iter()
        .map(|e| row_ids(&e.input.tokens, vocab, copy))
        .collect();
    let full_ranges: Vec<Range<usize>> = examples.iter().map(|e| 0..e.input.tokens.len()).collect();
    let tri_ranges: Vec<[Range<usize>; 3]> = examples.iter().map(|e| e.input.groups()).collect();
    let tri = [0, 1, 2].map(|k| {
        let ranges: Vec<Range<usize>> = tri_ranges.iter().map(|g| g[k].clone()).collect();
        slice_group(&rows, &ranges)
    });
    let max_oov = rows.iter().map(|r| r.oovs.len()).max().unwrap_or(0);
    let targets = examples
        .iter()
        .zip(&rows)
        .map(|(e, r)| target_ids(&e.target, vocab, &r.oovs, max_out))
        .collect();
    Ok(Batch {
        rows: examples.len(),
        full: slice_group(&rows, &full_ranges),
        tri,
        claim_segments: examples
            .iter()
            .map(|e| {
                e.input
                    .claim_spans
                    .iter()
                    .map(|(_, r)| (r.start, r.end))
                    .collect()
            })
            .collect(),
        relevant: examples.iter().map(|e| e.relevant.clone()).collect(),
        oovs: rows.into_iter().map(|r| r.oovs).collect(),
        ext_size: vocab.len() + max_oov,
        targets,
    })
}

/// Teacher-forcing layout: decoder inputs (`<bos>` then the target shifted,
/// as vocabulary ids) and outputs (extended ids), both time-major, plus
/// `B x 1` step masks.
pub(crate) struct Teacher {
    pub inputs: Vec<Vec<usize>>,
    pub outputs: Vec<Vec<usize>>,
    pub masks: Vec<Matrix>,
}

pub(crate) fn teacher(batch: &Batch, vocab_len: usize) -> Teacher {
    let steps = batch.targets.iter().map(Vec::len).max().unwrap_or(0);
    let as_input = |id: usize| if id >= vocab_len { UNK_ID } else { id };
    let mut inputs = Vec::with_capacity(steps);
    let mut outputs = Vec::with_capacity(steps);
    let mut masks = Vec::with_capacity(steps);
    for t in 0..steps {
        inputs.push(
            batch
                .targets
                .iter()
                .map(|s| {
                    if t == 0 {
                        crate::vocab::BOS_ID
                    } else {
                        s.get(t - 1).map_or(PAD_ID, |&i| as_input(i))
                    }
                })
                .collect(),
        );
        outputs.push(
            batch
                .targets
                .iter()
                .map(|s| s.get(t).copied().unwrap_or(PAD_ID))
                .collect(),
        );
        masks.push(Matrix::column(
            batch
                .targets
                .iter()
                .map(|s| if t < s.len() { 1.0 } else { 0.0 })
                .collect(),
        ));
    }
    Teacher {
        inputs,
        outputs,
        masks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::LinearizedInput;

    fn example(tokens: &str, target: &str) -> GenExample {
        let tokens: Vec<String> = tokens.split(' ').map(str::to_string).collect();
        let n = tokens.len();
        GenExample {
            id: "x".into(),
            input: LinearizedInput {
                claim_spans: vec![(0, n - 2..n)],
                context_span: 0..n - 2,
                prev_len: 1,
                tokens,
            },
            target: target.split(' ').map(str::to_string).collect(),
            relevant: vec![true],
            sent_with_slot: String::new(),
        }
    }

    #[test]
    fn copy_slots_are_per_row() {
        let vocab = Vocab::build(["a", "b"], 100);
        let v = vocab.len();
        let e1 = example("a zz b <value> zz", "zz a qq");
        let e2 = example("b <value> yy", "yy");
        let batch = make_batch(&[&e1, &e2], &vocab, true, 30).unwrap();
        assert_eq!(batch.ext_size, v + 1);
        assert_eq!(
            batch.full.ext[0],
            vec![vocab.id("a"), v, vocab.id("b"), vocab.id("<value>"), v]
        );
        assert_eq!(batch.full.ids[0][1], UNK_ID);
        assert_eq!(
            batch.oovs,
            vec![vec!["zz".to_string()], vec!["yy".to_string()]]
        );
        assert_eq!(batch.targets[0], vec![v, vocab.id("a"), UNK_ID, EOS_ID]);
        assert_eq!(batch.targets[1], vec![v, EOS_ID]);
        // claims / prev / curr groups
        assert_eq!(batch.tri[0].ids[0].len(), 2);
        assert_eq!(batch.tri[1].ids[1], vec![vocab.id("b")]);
        assert_eq!(batch.tri[2].ids[1], vec![PAD_ID]);

        let t = teacher(&batch, v);
        assert_eq!(t.inputs[0], vec![crate::vocab::BOS_ID; 2]);
        assert_eq!(t.inputs[1], vec![UNK_ID, UNK_ID]);
        assert_eq!(t.masks[2].data(), &[1.0, 0.0]);

        let no_copy = make_batch(&[&e1], &vocab, false, 2).unwrap();
        assert_eq!(no_copy.ext_size, v);
        assert_eq!(no_copy.targets[0], vec![UNK_ID, vocab.id("a"), EOS_ID]);
    }
}
