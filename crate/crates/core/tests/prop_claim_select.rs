mod strategies;

use std::collections::BTreeSet;

use pomo_core::claim_select::{
    evaluate_selection, select_by_threshold, select_top_n, sweep_n, train_selector, OptimizerKind,
    SelModelConfig, SelectRule,
};
use pomo_core::synthetic::selection_task;
use proptest::prelude::*;

/// Scores on a 1/8 grid, so shifting by a grid multiple is exact.
fn grid_scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..16).prop_map(|k| k as f64 / 8.0), 1..=max)
}

fn index_set(max: usize) -> impl Strategy<Value = BTreeSet<usize>> {
    prop::collection::btree_set(0..max, 0..max)
}

proptest! {
    #[test]
    fn top_n_ignores_a_constant_shift(scores in grid_scores(10), n in 0usize..12, shift in -8i32..8) {
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift as f64 / 8.0).collect();
        prop_assert_eq!(select_top_n(&scores, n), select_top_n(&shifted, n));
    }

    #[test]
    fn top_n_size_and_bounds(scores in grid_scores(10), n in 0usize..12) {
        let picked = select_top_n(&scores, n);
        prop_assert_eq!(picked.len(), n.min(scores.len()));
        prop_assert!(picked.iter().all(|&i| i < scores.len()));
        // Nothing left out scores above anything picked.
        for i in (0..scores.len()).filter(|i| !picked.contains(i)) {
            prop_assert!(picked.iter().all(|&j| scores[j] >= scores[i]));
        }
    }

    #[test]
    fn raising_tau_never_adds(scores in grid_scores(10), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(select_by_threshold(&scores, hi).is_subset(&select_by_threshold(&scores, lo)));
    }

    #[test]
    fn recall_grows_with_n(instances in strategies::instances(8, 20), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<Vec<f64>> = instances.iter().map(|i| i.claims.iter().map(|_| rng.gen()).collect()).collect();
        let rows = sweep_n(&scores, &instances, 0..=7);
        prop_assert!(rows.windows(2).all(|w| w[1].recall >= w[0].recall));
        prop_assert_eq!(rows.last().map(|r| r.recall), Some(1.0));
    }

    #[test]
    fn selection_scores_match_a_recount(pred in index_set(8), gold in index_set(8)) {
        let p: Vec<usize> = pred.iter().copied().collect();
        let g: Vec<usize> = gold.iter().copied().collect();
        let mut tp = 0;
        for x in &p {
            for y in &g {
                if x == y {
                    tp += 1;
                }
            }
        }
        let precision = if p.is_empty() { 0.0 } else { tp as f64 / p.len() as f64 };
        let recall = if g.is_empty() { 0.0 } else { tp as f64 / g.len() as f64 };
        let f1 = if tp == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        let got = evaluate_selection(&pred, &gold);
        prop_assert_eq!(got.precision, precision);
        prop_assert_eq!(got.recall, recall);
        prop_assert!((got.f1 - f1).abs() < 1e-12);
    }
}

#[test]
fn training_loss_falls_over_the_first_epochs() {
    for seed in [1, 2, 3] {
        let data = selection_task(240, 100 + seed);
        let config = SelModelConfig {
            embedding_dim: 16,
            hidden: 32,
            layers: 1,
            keep_prob: 1.0,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            init_scale: 0.5,
            batch_size: 8,
            epochs: 5,
            seed,
            ..SelModelConfig::default()
        };
        let trained =
            train_selector(&data[..200], &data[200..], &config, SelectRule::TopN(2)).unwrap();
        let losses: Vec<f64> = trained.log.iter().map(|l| l.train_loss).collect();
        assert!(
            losses.windows(2).all(|w| w[1] < w[0]),
            "seed {seed}: {losses:?}"
        );
    }
}
