#![no_main]

use libfuzzer_sys::fuzz_target;
use pomo_core::dataset::{parse_instances, write_instances};

fuzz_target!(|data: &[u8]| {
    let Ok(instances) = parse_instances(data, "fuzz") else {
        return;
    };
    let mut buf = Vec::new();
    write_instances(&instances, &mut buf).unwrap();
    assert_eq!(parse_instances(buf.as_slice(), "fuzz").unwrap(), instances);
});
