#![no_main]

use libfuzzer_sys::fuzz_target;
use pomo_core::eval_metrics::{bleu, bow_prf, meteor_lite};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let (pred, reference) = text.split_once('\n').unwrap_or((&text, ""));
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    let p = bow_prf(pred, reference);
    assert!(unit(p.precision) && unit(p.recall) && unit(p.f1));
    assert!(unit(bleu(&[pred], &[reference])));
    assert!(unit(meteor_lite(pred, reference)));
});
