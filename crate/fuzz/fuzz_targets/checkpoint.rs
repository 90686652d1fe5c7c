#![no_main]

use libfuzzer_sys::fuzz_target;
use pomo_core::checkpoint::decode;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode(data) {
        for (_, m) in &ckpt.params {
            assert_eq!(m.data().len(), m.rows() * m.cols());
        }
    }
});
