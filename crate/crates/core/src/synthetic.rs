//! Seeded synthetic datasets whose labels are known by construction, used to
//! check that the selectors and generators can learn what they should.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus_io::Source;
use crate::dataset::{InstanceClaim, PomoInstance};
use crate::extraction::PM_SLOT;

pub const KEYS: [&str; 10] = [
    "occupation",
    "employer",
    "party",
    "award",
    "team",
    "school",
    "spouse",
    "birthplace",
    "position",
    "genre",
];

fn filler(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| format!("w{}", rng.gen_range(0..FILLER_WORDS)))
        .collect()
}

fn name(i: usize) -> String {
    format!("Person{}", i % NAMES)
}

fn instance(
    i: usize,
    prev: Vec<String>,
    curr: Vec<String>,
    target: String,
    claims: Vec<InstanceClaim>,
) -> PomoInstance {
    let source = if i.is_multiple_of(2) {
        Source::Nyt
    } else {
        Source::Cnn
    };
    PomoInstance {
        id: format!("{source}-syn{i}-0"),
        source,
        entity_name: name(i),
        kb_id: format!("S{i}"),
        prev_sentence: prev.join(" "),
        sent_with_slot: curr.join(" "),
        pm_target: target,
        claims,
    }
}

/// Distinct filler words and entity names; kept small so that no instance
/// has tokens of its own to memorize.
const FILLER_WORDS: usize = 20;
const NAMES: usize = 30;

const SEL_CLAIMS: usize = 8;
const SEL_VALUES: usize = 12;

/// Claim selection task: eight claims with single-token values drawn from a
/// pool of twelve. Exactly two are relevant, and those are exactly the claims
/// whose value closes the current sentence.
pub fn selection_task(n: usize, seed: u64) -> Vec<PomoInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut keys = KEYS.to_vec();
            keys.shuffle(&mut rng);
            let mut values: Vec<usize> = (0..SEL_VALUES).collect();
            values.shuffle(&mut rng);
            let mut relevant = [false; SEL_CLAIMS];
            for k in rand::seq::index::sample(&mut rng, SEL_CLAIMS, 2) {
                relevant[k] = true;
            }
            let claims: Vec<InstanceClaim> = (0..SEL_CLAIMS)
                .map(|k| InstanceClaim {
                    key: keys[k].to_string(),
                    value: format!("v{}", values[k]),
                    relevant: relevant[k],
                })
                .collect();
            let prev = filler(&mut rng, 4);
            let mut curr = filler(&mut rng, 4);
            curr.insert(0, PM_SLOT.to_string());
            curr.insert(0, name(i));
            let mut target = Vec::new();
            for c in claims.iter().filter(|c| c.relevant) {
                curr.push(c.value.clone());
                target.push(c.value.clone());
            }
            instance(i, prev, curr, target.join(" "), claims)
        })
        .collect()
}

/// Post-modifier copy task: the target is the relevant claims' values in
/// claim order. Half the instances name the relevant claims' keys in the
/// current sentence; otherwise nothing in the context tells which claims
/// matter.
pub fn copy_task(n: usize, seed: u64) -> Vec<PomoInstance> {
    copy_task_with_mentions(n, seed, 0.5)
}

/// [`copy_task`] where each instance names its relevant keys with
/// probability `mention_rate`.
pub fn copy_task_with_mentions(n: usize, seed: u64, mention_rate: f64) -> Vec<PomoInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let n_claims = rng.gen_range(3..=5);
            let n_relevant = rng.gen_range(1..=2);
            let mut keys = KEYS.to_vec();
            keys.shuffle(&mut rng);
            let mut relevant = vec![false; n_claims];
            for k in rand::seq::index::sample(&mut rng, n_claims, n_relevant) {
                relevant[k] = true;
            }
            let claims: Vec<InstanceClaim> = (0..n_claims)
                .map(|k| {
                    let len = rng.gen_range(1..=2);
                    let value: Vec<String> = (0..len)
                        .map(|_| format!("v{}", rng.gen_range(0..400)))
                        .collect();
                    InstanceClaim {
                        key: keys[k].to_string(),
                        value: value.join(" "),
                        relevant: relevant[k],
                    }
                })
                .collect();
            let prev = filler(&mut rng, 5);
            let mut curr = vec![name(i), PM_SLOT.to_string()];
            curr.extend(filler(&mut rng, 4));
            if rng.gen_bool(mention_rate) {
                for c in claims.iter().filter(|c| c.relevant) {
                    curr.push(c.key.clone());
                }
            }
            let target: Vec<&str> = claims
                .iter()
                .filter(|c| c.relevant)
                .map(|c| c.value.as_str())
                .collect();
            instance(i, prev, curr, target.join(" "), claims)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_labels_match_context() {
        for inst in selection_task(50, 3) {
            assert!(inst.check().is_ok());
            let ctx = format!("{} {}", inst.prev_sentence, inst.sent_with_slot);
            let words: Vec<&str> = ctx.split_whitespace().collect();
            for c in &inst.claims {
                assert_eq!(words.contains(&c.value.as_str()), c.relevant);
            }
            assert_eq!(inst.claims.iter().filter(|c| c.relevant).count(), 2);
        }
    }

    #[test]
    fn copy_targets_are_relevant_values() {
        for inst in copy_task(50, 4) {
            assert!(inst.check().is_ok());
            let expect: Vec<&str> = inst
                .claims
                .iter()
                .filter(|c| c.relevant)
                .map(|c| c.value.as_str())
                .collect();
            assert_eq!(inst.pm_target, expect.join(" "));
        }
        assert_eq!(copy_task(5, 9), copy_task(5, 9));
    }
}
