//! The bundled fixture corpus and KB against their hand-derived gold files.

use std::path::PathBuf;

use pomo_core::corpus_io::{load_parsed_corpus, validate_document};
use pomo_core::dataset::build_instances;
use pomo_core::extraction::{extract_from_corpus, read_candidates, ExtractOptions, PMCandidate};
use pomo_core::kb_link::{load_kb, LinkConfig};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn extract(opts: ExtractOptions) -> Vec<PMCandidate> {
    let corpus = load_parsed_corpus(&fixture("corpus.jsonl")).unwrap();
    extract_from_corpus(corpus, opts)
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn corpus_is_valid_and_has_twenty_sentences() {
    let docs: Vec<_> = load_parsed_corpus(&fixture("corpus.jsonl"))
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(docs.iter().map(|d| d.sentences.len()).sum::<usize>(), 20);
    for d in &docs {
        assert!(validate_document(d).is_empty(), "{}", d.doc_id);
    }
}

#[test]
fn extraction_reproduces_gold() {
    let gold = read_candidates(&fixture("gold_candidates.jsonl")).unwrap();
    let found = extract(ExtractOptions::default());
    assert_eq!(found.len(), gold.len());
    for (f, g) in found.iter().zip(&gold) {
        assert_eq!(f, g);
    }
}

#[test]
fn strict_mode_drops_the_double_appositive() {
    let found = extract(ExtractOptions { strict: true });
    assert_eq!(found.len(), 7);
    assert!(found.iter().all(|c| c.mention.name != "Tom Hanks"));
}

#[test]
fn fixture_kb_links_all_but_the_bare_age() {
    let kb = load_kb(&fixture("kb.jsonl")).unwrap();
    let cands = extract(ExtractOptions::default());
    let (instances, counts) = build_instances(&cands, &kb, LinkConfig::default());
    assert_eq!((counts.linked, counts.dropped), (7, 1));
    let flags = |name: &str| {
        let inst = instances.iter().find(|i| i.entity_name == name).unwrap();
        (
            inst.kb_id.clone(),
            inst.claims.iter().map(|c| c.relevant).collect::<Vec<_>>(),
        )
    };
    assert_eq!(
        flags("Kenneth Clarke"),
        ("Q298218".into(), vec![true, false])
    );
    assert_eq!(
        flags("Howard Ballard"),
        ("Q5918563".into(), vec![true, true, false, false])
    );
    assert_eq!(
        flags("Noam Chomsky"),
        ("Q9049".into(), vec![false, true, true, true, false])
    );
    // The namesake politician shares no claims with the post-modifier.
    assert_eq!(
        flags("Alice Walker"),
        ("Q215868".into(), vec![true, true, false])
    );
}
