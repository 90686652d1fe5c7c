#![no_main]

use libfuzzer_sys::fuzz_target;
use pomo_core::corpus_io::{document_to_line, parse_document_line, validate_document};
use pomo_core::extraction::{extract_document, ExtractOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(doc) = parse_document_line(line, "fuzz", 1) else {
        return;
    };
    let again =
        parse_document_line(&document_to_line(&doc), "fuzz", 1).expect("written documents parse");
    assert_eq!(again, doc);
    // Extraction is only defined on documents that validate.
    if validate_document(&doc).is_empty() {
        for strict in [false, true] {
            for c in extract_document(&doc, ExtractOptions { strict }) {
                assert!(c.slot_span.start <= c.pm_span.start && c.pm_span.end <= c.slot_span.end);
            }
        }
    }
});
