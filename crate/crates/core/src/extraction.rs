//! Person mentions and their appositive post-modifiers.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{join_tokens, sentence_context, ParsedDocument, ParsedSentence, Source};
use crate::error::{Error, Result};
use crate::text::is_punct;

pub const PM_SLOT: &str = "<pm-slot>";
pub const PERSON: &str = "PERSON";
pub const APPOS: &str = "appos";

/// A maximal run of PERSON tokens. Spans are 0-based, end-exclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub doc_id: String,
    pub sent_index: usize,
    pub span: Range<usize>,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PMCandidate {
    pub source: Source,
    pub mention: EntityMention,
    /// 0-based index of the appositive head token.
    pub pm_head: usize,
    pub pm_span: Range<usize>,
    /// Tokens replaced by the slot: `pm_span` plus any absorbed delimiting commas.
    pub slot_span: Range<usize>,
    pub pm_text: String,
    pub prev_text: String,
    pub sent_with_slot: String,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExtractOptions {
    /// Skip sentences with more than one usable (mention, appositive) pair
    /// instead of keeping the leftmost.
    pub strict: bool,
}

pub fn find_person_mentions(sent: &ParsedSentence) -> Vec<EntityMention> {
    let mut out = Vec::new();
    let mut start = None;
    let n = sent.tokens.len();
    for i in 0..=n {
        let is_person = i < n && sent.tokens[i].ner == PERSON;
        match (start, is_person) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                out.push(EntityMention {
                    doc_id: sent.doc_id.clone(),
                    sent_index: sent.sent_index,
                    span: s..i,
                    name: join_tokens(sent.tokens[s..i].iter().map(|t| t.text.as_str())),
                });
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Smallest contiguous range covering `root` and all its dependency descendants.
fn projection(sent: &ParsedSentence, root: usize) -> Range<usize> {
    let n = sent.tokens.len();
    let mut children = vec![Vec::new(); n];
    for (i, t) in sent.tokens.iter().enumerate() {
        if t.head > 0 && t.head <= n {
            children[t.head - 1].push(i);
        }
    }
    let (mut lo, mut hi) = (root, root);
    let mut stack = vec![root];
    let mut seen = vec![false; n];
    seen[root] = true;
    while let Some(i) = stack.pop() {
        lo = lo.min(i);
        hi = hi.max(i);
        for &c in &children[i] {
            if !seen[c] {
                seen[c] = true;
                stack.push(c);
            }
        }
    }
    lo..hi + 1
}

fn trim_punct(sent: &ParsedSentence, mut span: Range<usize>) -> Range<usize> {
    while span.start < span.end && is_punct(&sent.tokens[span.start].text) {
        span.start += 1;
    }
    while span.start < span.end && is_punct(&sent.tokens[span.end - 1].text) {
        span.end -= 1;
    }
    span
}

fn overlaps(a: &Range<usize>, b: &Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

/// Usable (mention, appositive head, post-modifier span) pairs, ordered by head index.
fn appositive_pairs(sent: &ParsedSentence) -> Vec<(EntityMention, usize, Range<usize>)> {
    let mentions = find_person_mentions(sent);
    let mut pairs = Vec::new();
    for (i, tok) in sent.tokens.iter().enumerate() {
        if tok.deprel != APPOS || tok.head == 0 {
            continue;
        }
        let gov = tok.head - 1;
        let Some(m) = mentions.iter().find(|m| m.span.contains(&gov)) else {
            continue;
        };
        let span = trim_punct(sent, projection(sent, i));
        if !span.contains(&i) || overlaps(&span, &m.span) {
            continue;
        }
        pairs.push((m.clone(), i, span));
    }
    pairs
}

pub fn extract_appositive_pm(doc: &ParsedDocument, sent_index: usize) -> Option<PMCandidate> {
    extract_appositive_pm_with(doc, sent_index, ExtractOptions::default())
}

pub fn extract_appositive_pm_with(
    doc: &ParsedDocument,
    sent_index: usize,
    opts: ExtractOptions,
) -> Option<PMCandidate> {
    let sent = doc.sentences.get(sent_index)?;
    let pairs = appositive_pairs(sent);
    if opts.strict && pairs.len() > 1 {
        return None;
    }
    let (mention, pm_head, pm_span) = pairs.into_iter().next()?;
    let toks = &sent.tokens;
    let is_comma = |i: usize| toks[i].text == "," && !mention.span.contains(&i);
    let mut slot = pm_span.clone();
    if slot.start > 0 && is_comma(slot.start - 1) {
        slot.start -= 1;
    }
    if slot.end < toks.len() && is_comma(slot.end) {
        slot.end += 1;
    }
    let words = |r: Range<usize>| toks[r].iter().map(|t| t.text.as_str());
    let sent_with_slot = join_tokens(
        words(0..slot.start)
            .chain([PM_SLOT])
            .chain(words(slot.end..toks.len())),
    );
    let (prev_text, _) = sentence_context(doc, sent_index).ok()?;
    Some(PMCandidate {
        source: doc.source,
        pm_text: join_tokens(words(pm_span.clone())),
        mention,
        pm_head,
        pm_span,
        slot_span: slot,
        prev_text,
        sent_with_slot,
    })
}

/// At most one candidate per sentence, in corpus order.
pub fn extract_from_corpus<I>(
    corpus: I,
    opts: ExtractOptions,
) -> impl Iterator<Item = Result<PMCandidate>>
where
    I: IntoIterator<Item = Result<ParsedDocument>>,
{
    corpus.into_iter().flat_map(move |doc| {
        let found: Vec<Result<PMCandidate>> = match doc {
            Ok(d) => extract_document(&d, opts).into_iter().map(Ok).collect(),
            Err(e) => vec![Err(e)],
        };
        found
    })
}

pub fn extract_document(doc: &ParsedDocument, opts: ExtractOptions) -> Vec<PMCandidate> {
    (0..doc.sentences.len())
        .filter_map(|i| extract_appositive_pm_with(doc, i, opts))
        .collect()
}

pub fn write_candidates<'a, W: Write>(
    cands: impl IntoIterator<Item = &'a PMCandidate>,
    mut w: W,
) -> std::io::Result<()> {
    for c in cands {
        writeln!(
            w,
            "{}",
            serde_json::to_string(c).expect("candidate serialization cannot fail")
        )?;
    }
    w.flush()
}

pub fn parse_candidates<R: BufRead>(reader: R, location: &str) -> Result<Vec<PMCandidate>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(location, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let c: PMCandidate = serde_json::from_str(&line)
            .map_err(|e| Error::record(location, i + 1, e.to_string()))?;
        check_candidate(&c).map_err(|m| Error::record(location, i + 1, m))?;
        out.push(c);
    }
    Ok(out)
}

fn check_candidate(c: &PMCandidate) -> std::result::Result<(), String> {
    if !c.pm_span.contains(&c.pm_head) {
        return Err("pm_head outside pm_span".into());
    }
    if overlaps(&c.pm_span, &c.mention.span) {
        return Err("pm_span overlaps the mention".into());
    }
    if c.pm_text.split_whitespace().all(is_punct) {
        return Err("pm_text has no word tokens".into());
    }
    if c.sent_with_slot
        .split_whitespace()
        .filter(|t| *t == PM_SLOT)
        .count()
        != 1
    {
        return Err(format!("sent_with_slot must contain exactly one {PM_SLOT}"));
    }
    Ok(())
}

pub fn read_candidates(path: &Path) -> Result<Vec<PMCandidate>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_candidates(BufReader::new(f), &path.display().to_string())
}
