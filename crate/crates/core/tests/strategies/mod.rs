//! Proptest strategies shared by the property suites.

#![allow(dead_code)]

use pomo_core::corpus_io::{ParsedDocument, ParsedSentence, ParsedToken, Source};
use pomo_core::dataset::{InstanceClaim, PomoInstance};
use pomo_core::extraction::PM_SLOT;
use proptest::prelude::*;
use proptest::sample::Index;

pub const TEXTS: [&str; 12] = [
    "Ann", "Lee", "the", "writer", ",", ".", "of", "Boston", "and", "said", "Dr.", "'s",
];
pub const WORDS: [&str; 12] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
    "kilo", "lima",
];

/// A well-formed dependency tree over `n` tokens: tokens are attached in a
/// random order, each to one already attached, so the heads form a tree.
fn tree(n: usize) -> impl Strategy<Value = Vec<usize>> {
    (
        Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        prop::collection::vec(any::<Index>(), n),
    )
        .prop_map(move |(order, picks)| {
            let mut heads = vec![0; n];
            for k in 1..n {
                heads[order[k]] = order[picks[k].index(k)] + 1;
            }
            heads
        })
}

fn tokens() -> impl Strategy<Value = Vec<ParsedToken>> {
    (1usize..14).prop_flat_map(|n| {
        let fields = prop::collection::vec(
            (
                prop::sample::select(&TEXTS[..]),
                prop::bool::weighted(0.4),
                prop::bool::weighted(0.35),
            ),
            n,
        );
        (tree(n), fields).prop_map(|(heads, fields)| {
            heads
                .into_iter()
                .zip(fields)
                .map(|(head, (text, person, appos))| ParsedToken {
                    text: text.to_string(),
                    ner: if person { "PERSON" } else { "O" }.to_string(),
                    head,
                    deprel: match (head, appos) {
                        (0, _) => "root",
                        (_, true) => "appos",
                        _ => "dep",
                    }
                    .to_string(),
                })
                .collect()
        })
    })
}

pub fn source() -> impl Strategy<Value = Source> {
    prop::sample::select(&Source::ALL[..])
}

/// A document that passes validation.
pub fn document() -> impl Strategy<Value = ParsedDocument> {
    (
        "[a-z][a-z0-9]{0,5}",
        source(),
        prop::collection::vec(tokens(), 1..5),
    )
        .prop_map(|(doc_id, source, sents)| ParsedDocument {
            sentences: sents
                .into_iter()
                .enumerate()
                .map(|(sent_index, tokens)| ParsedSentence {
                    doc_id: doc_id.clone(),
                    sent_index,
                    tokens,
                })
                .collect(),
            doc_id,
            source,
        })
}

/// Up to three words from [`WORDS`], space-joined.
pub fn phrase() -> impl Strategy<Value = String> {
    prop::sample::subsequence(&WORDS[..], 1..=3)
        .prop_shuffle()
        .prop_map(|w| w.join(" "))
}

pub fn instance_claims(max: usize) -> impl Strategy<Value = Vec<InstanceClaim>> {
    (
        prop::collection::vec((0usize..6, phrase(), any::<bool>()), 1..=max),
        any::<prop::sample::Index>(),
    )
        .prop_map(|(cs, pick)| {
            let mut claims: Vec<InstanceClaim> = cs
                .into_iter()
                .map(|(k, value, relevant)| InstanceClaim {
                    key: format!("key{k}"),
                    value,
                    relevant,
                })
                .collect();
            // Dataset instances always carry a relevant claim.
            let i = pick.index(claims.len());
            claims[i].relevant = true;
            claims
        })
}

/// Valid instances over at most `entities` distinct kb_ids with random sources, texts,
/// and claims.
pub fn instances(entities: usize, max: usize) -> impl Strategy<Value = Vec<PomoInstance>> {
    prop::collection::vec(
        (
            0..entities,
            source(),
            phrase(),
            phrase(),
            phrase(),
            instance_claims(6),
        ),
        1..=max,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (e, source, prev, curr, pm, claims))| PomoInstance {
                id: format!("{source}-d{i}-0"),
                source,
                entity_name: format!("Person {e}"),
                kb_id: format!("Q{e}"),
                prev_sentence: prev,
                sent_with_slot: format!("{curr} {PM_SLOT} ."),
                pm_target: pm,
                claims,
            })
            .collect()
    })
}
