//! Dependency-parsed, NER-tagged documents in line-delimited JSON.
//!
//! One document per line:
//!
//! ```json
//! {"doc_id": "d1", "source": "nyt", "sentences": [{"tokens": [{"text": "Noam", "ner": "PERSON", "head": 2, "deprel": "compound"}]}]}
//! ```
//!
//! `head` is the 1-based index of the governing token, 0 for the root.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParsedToken {
    pub text: String,
    pub ner: String,
    pub head: usize,
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedSentence {
    pub doc_id: String,
    pub sent_index: usize,
    pub tokens: Vec<ParsedToken>,
}

impl ParsedSentence {
    /// Space-joined token texts.
    pub fn text(&self) -> String {
        join_tokens(self.tokens.iter().map(|t| t.text.as_str()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Nyt,
    Cnn,
    Dm,
    Other,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Nyt, Source::Cnn, Source::Dm, Source::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Nyt => "nyt",
            Source::Cnn => "cnn",
            Source::Dm => "dm",
            Source::Other => "other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "nyt" => Ok(Source::Nyt),
            "cnn" => Ok(Source::Cnn),
            "dm" => Ok(Source::Dm),
            "other" => Ok(Source::Other),
            _ => Err(format!("unknown source tag {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedDocument {
    pub doc_id: String,
    pub source: Source,
    pub sentences: Vec<ParsedSentence>,
}

#[derive(Serialize, Deserialize)]
struct DocumentRecord {
    doc_id: String,
    source: String,
    sentences: Vec<SentenceRecord>,
}

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    tokens: Vec<ParsedToken>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    EmptySentence,
    SentIndexMismatch {
        found: usize,
    },
    HeadOutOfRange {
        head: usize,
        len: usize,
    },
    SelfHead,
    NoRoot,
    MultipleRoots {
        count: usize,
    },
    /// Token positions (1-based) forming a head cycle.
    Cycle {
        members: Vec<usize>,
    },
}

/// One broken invariant. `token` is 1-based, matching head numbering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub doc_id: String,
    pub sent_index: usize,
    pub token: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "doc {} sentence {}", self.doc_id, self.sent_index)?;
        if let Some(t) = self.token {
            write!(f, " token {t}")?;
        }
        match &self.kind {
            ViolationKind::EmptySentence => write!(f, ": sentence has no tokens"),
            ViolationKind::SentIndexMismatch { found } => {
                write!(f, ": sentence index {found} out of order")
            }
            ViolationKind::HeadOutOfRange { head, len } => {
                write!(f, ": head {head} outside 0..={len}")
            }
            ViolationKind::SelfHead => write!(f, ": token is its own head"),
            ViolationKind::NoRoot => write!(f, ": no root token (head 0)"),
            ViolationKind::MultipleRoots { count } => write!(f, ": {count} root tokens"),
            ViolationKind::Cycle { members } => {
                write!(f, ": head cycle through tokens {members:?}")
            }
        }
    }
}

/// Checks every structural invariant; an empty result means the document is valid.
pub fn validate_document(doc: &ParsedDocument) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, sent) in doc.sentences.iter().enumerate() {
        let v = |token, kind| Violation {
            doc_id: doc.doc_id.clone(),
            sent_index: sent.sent_index,
            token,
            kind,
        };
        if sent.sent_index != i {
            out.push(v(
                None,
                ViolationKind::SentIndexMismatch {
                    found: sent.sent_index,
                },
            ));
        }
        let len = sent.tokens.len();
        if len == 0 {
            out.push(v(None, ViolationKind::EmptySentence));
            continue;
        }
        let mut roots = Vec::new();
        for (k, tok) in sent.tokens.iter().enumerate() {
            let pos = k + 1;
            if tok.head > len {
                out.push(v(
                    Some(pos),
                    ViolationKind::HeadOutOfRange {
                        head: tok.head,
                        len,
                    },
                ));
            } else if tok.head == pos {
                out.push(v(Some(pos), ViolationKind::SelfHead));
            } else if tok.head == 0 {
                roots.push(pos);
            }
        }
        match roots.len() {
            0 => out.push(v(None, ViolationKind::NoRoot)),
            1 => {}
            n => out.push(v(Some(roots[1]), ViolationKind::MultipleRoots { count: n })),
        }
        for members in head_cycles(&sent.tokens) {
            out.push(v(Some(members[0]), ViolationKind::Cycle { members }));
        }
    }
    out
}

/// Cycles among valid, non-self head links, each listed once from its smallest member.
fn head_cycles(tokens: &[ParsedToken]) -> Vec<Vec<usize>> {
    let len = tokens.len();
    let next = |pos: usize| -> Option<usize> {
        let h = tokens[pos - 1].head;
        (h != 0 && h <= len && h != pos).then_some(h)
    };
    // 0 = unvisited, 1 = on current path, 2 = done
    let mut state = vec![0u8; len + 1];
    let mut cycles = Vec::new();
    for start in 1..=len {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = Some(start);
        while let Some(p) = cur {
            match state[p] {
                0 => {
                    state[p] = 1;
                    path.push(p);
                    cur = next(p);
                }
                1 => {
                    let at = path.iter().position(|&x| x == p).expect("on path");
                    let mut members = path[at..].to_vec();
                    members.sort_unstable();
                    cycles.push(members);
                    break;
                }
                _ => break,
            }
        }
        for p in path {
            state[p] = 2;
        }
    }
    cycles.sort();
    cycles
}

/// Parses one document line. `line_no` (1-based) and `location` go into errors.
/// Unknown source tags map to [`Source::Other`] with a warning.
pub fn parse_document_line(line: &str, location: &str, line_no: usize) -> Result<ParsedDocument> {
    let rec: DocumentRecord =
        serde_json::from_str(line).map_err(|e| Error::record(location, line_no, e.to_string()))?;
    let source = rec.source.parse().unwrap_or_else(|e| {
        log::warn!("{location}:{line_no}: {e}; treating as \"other\"");
        Source::Other
    });
    let doc = ParsedDocument {
        sentences: rec
            .sentences
            .into_iter()
            .enumerate()
            .map(|(i, s)| ParsedSentence {
                doc_id: rec.doc_id.clone(),
                sent_index: i,
                tokens: s.tokens,
            })
            .collect(),
        doc_id: rec.doc_id,
        source,
    };
    if let Some(v) = validate_document(&doc).into_iter().next() {
        return Err(Error::record(location, line_no, v.to_string()));
    }
    Ok(doc)
}

/// Streams documents from a corpus file in file order. Blank lines are skipped.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    location: String,
    line_no: usize,
    seen: HashSet<String>,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, location: impl Into<String>) -> Self {
        CorpusReader {
            lines: reader.lines(),
            location: location.into(),
            line_no: 0,
            seen: HashSet::new(),
        }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<ParsedDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(PathBuf::from(&self.location), e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let doc = parse_document_line(&line, &self.location, self.line_no).and_then(|d| {
                if self.seen.insert(d.doc_id.clone()) {
                    Ok(d)
                } else {
                    Err(Error::record(
                        &self.location,
                        self.line_no,
                        format!("duplicate doc_id {:?}", d.doc_id),
                    ))
                }
            });
            return Some(doc);
        }
    }
}

pub fn load_parsed_corpus(path: &Path) -> Result<CorpusReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(CorpusReader::new(
        BufReader::new(file),
        path.display().to_string(),
    ))
}

/// Serializes one document in the canonical line format (no trailing newline).
pub fn document_to_line(doc: &ParsedDocument) -> String {
    let rec = DocumentRecord {
        doc_id: doc.doc_id.clone(),
        source: doc.source.to_string(),
        sentences: doc
            .sentences
            .iter()
            .map(|s| SentenceRecord {
                tokens: s.tokens.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&rec).expect("document serialization cannot fail")
}

pub fn write_corpus<'a, W: Write>(
    docs: impl IntoIterator<Item = &'a ParsedDocument>,
    mut w: W,
) -> std::io::Result<()> {
    for d in docs {
        writeln!(w, "{}", document_to_line(d))?;
    }
    w.flush()
}

pub fn join_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> String {
    tokens.into_iter().collect::<Vec<_>>().join(" ")
}

/// `(previous sentence text, current sentence text)`; the previous text is
/// empty for the first sentence.
pub fn sentence_context(doc: &ParsedDocument, sent_index: usize) -> Result<(String, String)> {
    let sent = doc.sentences.get(sent_index).ok_or_else(|| {
        Error::invalid(format!(
            "sentence index {sent_index} out of range for doc {} with {} sentences",
            doc.doc_id,
            doc.sentences.len()
        ))
    })?;
    let prev = match sent_index {
        0 => String::new(),
        i => doc.sentences[i - 1].text(),
    };
    Ok((prev, sent.text()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(text: &str, head: usize) -> ParsedToken {
        ParsedToken {
            text: text.into(),
            ner: "O".into(),
            head,
            deprel: "dep".into(),
        }
    }

    fn doc(sents: Vec<Vec<ParsedToken>>) -> ParsedDocument {
        ParsedDocument {
            doc_id: "d".into(),
            source: Source::Nyt,
            sentences: sents
                .into_iter()
                .enumerate()
                .map(|(i, tokens)| ParsedSentence {
                    doc_id: "d".into(),
                    sent_index: i,
                    tokens,
                })
                .collect(),
        }
    }

    #[test]
    fn well_formed_document_has_no_violations() {
        let d = doc(vec![vec![tok("a", 2), tok("b", 0), tok("c", 2)]]);
        assert!(validate_document(&d).is_empty());
    }

    #[test]
    fn two_roots_is_one_violation() {
        let d = doc(vec![vec![tok("a", 0), tok("b", 0), tok("c", 2)]]);
        let v = validate_document(&d);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::MultipleRoots { count: 2 });
    }

    #[test]
    fn two_cycle_is_one_violation() {
        let d = doc(vec![vec![tok("a", 2), tok("b", 1), tok("c", 0)]]);
        let v = validate_document(&d);
        assert_eq!(v.len(), 1);
        assert_eq!(
            v[0].kind,
            ViolationKind::Cycle {
                members: vec![1, 2]
            }
        );
        assert_eq!(v[0].token, Some(1));
    }

    #[test]
    fn head_out_of_range_names_line_and_token() {
        let line = r#"{"doc_id":"x","source":"cnn","sentences":[{"tokens":[
            {"text":"a","ner":"O","head":9,"deprel":"dep"},
            {"text":"b","ner":"O","head":0,"deprel":"root"},
            {"text":"c","ner":"O","head":2,"deprel":"dep"}]}]}"#
            .replace('\n', "");
        let err = parse_document_line(&line, "corpus.jsonl", 7)
            .unwrap_err()
            .to_string();
        assert!(err.contains("corpus.jsonl:7"), "{err}");
        assert!(err.contains("token 1"), "{err}");
        assert!(err.contains("head 9"), "{err}");
    }

    #[test]
    fn unknown_source_maps_to_other() {
        let line = r#"{"doc_id":"x","source":"wsj","sentences":[{"tokens":[{"text":"a","ner":"O","head":0,"deprel":"root"}]}]}"#;
        assert_eq!(
            parse_document_line(line, "c", 1).unwrap().source,
            Source::Other
        );
    }

    #[test]
    fn reader_yields_in_order_and_skips_blank_lines() {
        let a = doc(vec![vec![tok("a", 0)]]);
        let mut b = a.clone();
        b.doc_id = "e".into();
        b.sentences[0].doc_id = "e".into();
        let mut buf = Vec::new();
        write_corpus([&a, &b], &mut buf).unwrap();
        buf.extend_from_slice(b"\n\n");
        let docs: Vec<_> = CorpusReader::new(&buf[..], "mem")
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(docs, vec![a, b]);
        assert_eq!(CorpusReader::new(&b""[..], "mem").count(), 0);
    }

    #[test]
    fn duplicate_doc_id_is_an_error() {
        let a = doc(vec![vec![tok("a", 0)]]);
        let mut buf = Vec::new();
        write_corpus([&a, &a], &mut buf).unwrap();
        let res: Result<Vec<_>> = CorpusReader::new(&buf[..], "mem").collect();
        assert!(res.unwrap_err().to_string().contains("mem:2"));
    }

    #[test]
    fn sentence_context_bounds() {
        let d = doc(vec![
            vec![tok("a", 0)],
            vec![tok("b", 2), tok("c", 0)],
            vec![tok("d", 0)],
        ]);
        assert_eq!(
            sentence_context(&d, 0).unwrap(),
            (String::new(), "a".into())
        );
        assert_eq!(sentence_context(&d, 1).unwrap(), ("a".into(), "b c".into()));
        assert!(sentence_context(&d, 5).is_err());
    }
}
