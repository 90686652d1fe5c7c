#![no_main]

use libfuzzer_sys::fuzz_target;
use pomo_core::extraction::{parse_candidates, write_candidates};

fuzz_target!(|data: &[u8]| {
    let Ok(cands) = parse_candidates(data, "fuzz") else {
        return;
    };
    let mut buf = Vec::new();
    write_candidates(&cands, &mut buf).unwrap();
    assert_eq!(parse_candidates(buf.as_slice(), "fuzz").unwrap(), cands);
});
