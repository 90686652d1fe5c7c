#![no_main]

use libfuzzer_sys::fuzz_target;
use pomo_core::kb_link::{link_entity, parse_kb};

fuzz_target!(|data: &[u8]| {
    let Ok(kb) = parse_kb(data, "fuzz") else {
        return;
    };
    for e in kb.entities() {
        let pm = e
            .claims
            .iter()
            .map(|c| c.value.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        if let Some(r) = link_entity(&e.label, &pm, &kb, 0.3) {
            assert!(r.coverage >= 0.3 && r.relevant.iter().any(|&x| x));
        }
    }
});
