//! Generation metrics: bag-of-words P/R/F1, corpus BLEU-4, METEOR-lite, and
//! length-bucketed reports.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::text::{is_punct, stopwords};

const STEM_RULES_FILE: &str = include_str!("../data/stem_rules.txt");

/// Pairs whose bucket value is at or above this share one bucket.
pub const BUCKET_CAP: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Set-overlap scores from true positives and the two set sizes.
    pub fn from_counts(tp: usize, pred: usize, gold: usize) -> Self {
        let precision = if pred == 0 {
            0.0
        } else {
            tp as f64 / pred as f64
        };
        let recall = if gold == 0 {
            0.0
        } else {
            tp as f64 / gold as f64
        };
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Lowercased content-word set: stopwords and bare punctuation dropped,
/// punctuation trimmed from token edges.
pub fn bag_of_words(text: &str, stop: &HashSet<String>) -> BTreeSet<String> {
    text.split_whitespace()
        .filter(|t| !is_punct(t))
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !stop.contains(w))
        .collect()
}

pub fn bow_prf(pred: &str, reference: &str) -> Prf {
    bow_prf_with(pred, reference, stopwords())
}

pub fn bow_prf_with(pred: &str, reference: &str, stop: &HashSet<String>) -> Prf {
    let (tp, p, g) = bow_counts(pred, reference, stop);
    Prf::from_counts(tp, p, g)
}

fn bow_counts(pred: &str, reference: &str, stop: &HashSet<String>) -> (usize, usize, usize) {
    let p = bag_of_words(pred, stop);
    let g = bag_of_words(reference, stop);
    (p.intersection(&g).count(), p.len(), g.len())
}

/// Micro-averaged bag-of-words scores over `(prediction, reference)` pairs.
pub fn corpus_bow_prf<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Prf {
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (p, r) in pairs {
        let (a, b, c) = bow_counts(p, r, stopwords());
        tp += a;
        np += b;
        ng += c;
    }
    Prf::from_counts(tp, np, ng)
}

/// Corpus-level BLEU-4 with uniform weights and no smoothing.
pub fn bleu<S: AsRef<str>>(preds: &[S], refs: &[S]) -> f64 {
    assert_eq!(preds.len(), refs.len(), "one reference per prediction");
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (p, g) in preds.iter().zip(refs) {
        let pt: Vec<&str> = p.as_ref().split_whitespace().collect();
        let gt: Vec<&str> = g.as_ref().split_whitespace().collect();
        c += pt.len();
        r += gt.len();
        for n in 1..=4 {
            let mut ref_counts: HashMap<&[&str], usize> = HashMap::new();
            for w in gt.windows(n) {
                *ref_counts.entry(w).or_default() += 1;
            }
            let mut pred_counts: HashMap<&[&str], usize> = HashMap::new();
            for w in pt.windows(n) {
                *pred_counts.entry(w).or_default() += 1;
            }
            for (gram, &cnt) in &pred_counts {
                matched[n - 1] += cnt.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            total[n - 1] += pt.len().saturating_sub(n - 1);
        }
    }
    if c == 0 || (0..4).any(|i| matched[i] == 0) {
        return 0.0;
    }
    let log_p: f64 = (0..4)
        .map(|i| (matched[i] as f64 / total[i] as f64).ln())
        .sum::<f64>()
        / 4.0;
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * log_p.exp()
}

fn stem_rules() -> &'static [(String, String)] {
    static RULES: OnceLock<Vec<(String, String)>> = OnceLock::new();
    RULES.get_or_init(|| {
        STEM_RULES_FILE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let mut parts = l.split_whitespace();
                let suffix = parts.next().expect("rule suffix").to_string();
                let repl = parts.next().expect("rule replacement");
                (
                    suffix,
                    if repl == "_" {
                        String::new()
                    } else {
                        repl.to_string()
                    },
                )
            })
            .collect()
    })
}

/// Lowercases and applies the first matching suffix rule once.
pub fn stem(token: &str) -> String {
    let t = token.to_lowercase();
    for (suffix, repl) in stem_rules() {
        if let Some(base) = t.strip_suffix(suffix.as_str()) {
            let out = format!("{base}{repl}");
            return if out.chars().count() >= 3 { out } else { t };
        }
    }
    t
}

/// Upper bound on search nodes per alignment; beyond it the best alignment
/// found so far is kept.
const ALIGN_BUDGET: usize = 200_000;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct AlignScore {
    exact: usize,
    matches: usize,
    neg_chunks: isize,
}

struct Aligner<'a> {
    /// Per pred position: candidate ref positions with an exact flag, exact first.
    options: &'a [Vec<(usize, bool)>],
    used: Vec<bool>,
    current: Vec<Option<usize>>,
    best: Option<(AlignScore, Vec<Option<usize>>)>,
    nodes: usize,
}

fn count_chunks(align: &[Option<usize>]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for (i, a) in align.iter().enumerate() {
        if let Some(j) = *a {
            match prev {
                Some((pi, pj)) if pi + 1 == i && pj + 1 == j => {}
                _ => chunks += 1,
            }
            prev = Some((i, j));
        }
    }
    chunks
}

impl Aligner<'_> {
    fn score(&self) -> AlignScore {
        let mut exact = 0;
        let mut matches = 0;
        for (i, a) in self.current.iter().enumerate() {
            if let Some(j) = a {
                matches += 1;
                if self.options[i].iter().any(|&(k, e)| k == *j && e) {
                    exact += 1;
                }
            }
        }
        AlignScore {
            exact,
            matches,
            neg_chunks: -(count_chunks(&self.current) as isize),
        }
    }

    fn search(&mut self, i: usize, exact_so_far: usize, matches_so_far: usize) {
        self.nodes += 1;
        if i == self.options.len() {
            let s = self.score();
            if self.best.as_ref().is_none_or(|(b, _)| s > *b) {
                self.best = Some((s, self.current.clone()));
            }
            return;
        }
        if self.nodes > ALIGN_BUDGET && self.best.is_some() {
            return;
        }
        // Bound: even matching every remaining position cannot beat the best.
        if let Some((b, _)) = &self.best {
            let remaining = self.options[i..].iter().filter(|o| !o.is_empty()).count();
            let remaining_exact = self.options[i..]
                .iter()
                .filter(|o| o.iter().any(|x| x.1))
                .count();
            let opt = (exact_so_far + remaining_exact, matches_so_far + remaining);
            if opt < (b.exact, b.matches) {
                return;
            }
        }
        // Prefer continuing the previous chunk so good alignments are found early.
        let prev = i.checked_sub(1).and_then(|p| self.current[p]);
        let mut opts = self.options[i].clone();
        opts.sort_by_key(|&(j, e)| (!e, Some(j) != prev.map(|p| p + 1), j));
        for (j, e) in opts {
            if self.used[j] {
                continue;
            }
            self.used[j] = true;
            self.current[i] = Some(j);
            self.search(i + 1, exact_so_far + e as usize, matches_so_far + 1);
            self.current[i] = None;
            self.used[j] = false;
        }
        self.search(i + 1, exact_so_far, matches_so_far);
    }
}

/// Best one-to-one unigram alignment: most exact matches, then most total
/// matches (exact or stem), then fewest chunks. Returns `(matches, chunks)`.
pub fn align(pred: &[String], reference: &[String]) -> (usize, usize) {
    let pred_stems: Vec<String> = pred.iter().map(|t| stem(t)).collect();
    let ref_stems: Vec<String> = reference.iter().map(|t| stem(t)).collect();
    let options: Vec<Vec<(usize, bool)>> = pred
        .iter()
        .zip(&pred_stems)
        .map(|(p, ps)| {
            reference
                .iter()
                .zip(&ref_stems)
                .enumerate()
                .filter_map(|(j, (r, rs))| {
                    if p == r {
                        Some((j, true))
                    } else if ps == rs {
                        Some((j, false))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let mut al = Aligner {
        options: &options,
        used: vec![false; reference.len()],
        current: vec![None; pred.len()],
        best: None,
        nodes: 0,
    };
    al.search(0, 0, 0);
    let (s, _) = al.best.expect("search visits at least one leaf");
    (s.matches, (-s.neg_chunks) as usize)
}

/// METEOR without the synonym stage: exact then stem matching, harmonic
/// mean weighted 9:1 toward recall, and a fragmentation penalty.
pub fn meteor_lite(pred: &str, reference: &str) -> f64 {
    let p: Vec<String> = pred.split_whitespace().map(str::to_lowercase).collect();
    let r: Vec<String> = reference
        .split_whitespace()
        .map(str::to_lowercase)
        .collect();
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    let (m, chunks) = align(&p, &r);
    if m == 0 {
        return 0.0;
    }
    let precision = m as f64 / p.len() as f64;
    let recall = m as f64 / r.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub bleu: f64,
    /// Mean sentence-level METEOR-lite.
    pub meteor: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub buckets: BTreeMap<String, MetricReport>,
}

/// One scored prediction with the metadata used for bucketing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub prediction: String,
    pub target: String,
    /// The sentence with its slot, used for sentence-length buckets.
    #[serde(default)]
    pub sent_with_slot: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BucketBy {
    /// Reference post-modifier length in tokens.
    PmLength,
    /// Length of the full sentence with the reference post-modifier in place.
    SentenceLength,
}

impl BucketBy {
    pub fn length(self, pair: &EvalPair) -> usize {
        let target = pair.target.split_whitespace().count();
        match self {
            BucketBy::PmLength => target,
            BucketBy::SentenceLength => {
                let sent = pair.sent_with_slot.split_whitespace().count();
                sent.saturating_sub(1) + target
            }
        }
    }
}

pub fn bucket_label(len: usize) -> String {
    if len >= BUCKET_CAP {
        format!("{BUCKET_CAP}+")
    } else {
        len.to_string()
    }
}

pub fn report(pairs: &[EvalPair]) -> MetricReport {
    let prf = corpus_bow_prf(
        pairs
            .iter()
            .map(|p| (p.prediction.as_str(), p.target.as_str())),
    );
    let preds: Vec<&str> = pairs.iter().map(|p| p.prediction.as_str()).collect();
    let refs: Vec<&str> = pairs.iter().map(|p| p.target.as_str()).collect();
    let meteor = if pairs.is_empty() {
        0.0
    } else {
        pairs
            .iter()
            .map(|p| meteor_lite(&p.prediction, &p.target))
            .sum::<f64>()
            / pairs.len() as f64
    };
    MetricReport {
        count: pairs.len(),
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        bleu: bleu(&preds, &refs),
        meteor,
        buckets: BTreeMap::new(),
    }
}

/// Per-bucket reports keyed by `"1"`..`"19"` and `"20+"`; empty buckets are absent.
pub fn bucketed_report(pairs: &[EvalPair], by: BucketBy) -> BTreeMap<String, MetricReport> {
    let mut groups: BTreeMap<usize, Vec<EvalPair>> = BTreeMap::new();
    for p in pairs {
        groups
            .entry(by.length(p).min(BUCKET_CAP))
            .or_default()
            .push(p.clone());
    }
    groups
        .into_iter()
        .map(|(k, ps)| (bucket_label(k), report(&ps)))
        .collect()
}

/// Overall report with per-bucket sub-reports attached.
pub fn full_report(pairs: &[EvalPair], by: BucketBy) -> MetricReport {
    let mut r = report(pairs);
    r.buckets = bucketed_report(pairs, by);
    r
}
