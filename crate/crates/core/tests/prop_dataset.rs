mod strategies;

use std::collections::{BTreeMap, BTreeSet};

use pomo_core::dataset::{
    dataset_stats, parse_instances, split_dataset, write_instances, PomoInstance,
};
use proptest::prelude::*;

fn ratios() -> impl Strategy<Value = (f64, f64, f64)> {
    (1u32..20, 1u32..20, 1u32..20).prop_map(|(a, b, c)| {
        let s = (a + b + c) as f64;
        let (a, b) = (a as f64 / s, b as f64 / s);
        (a, b, 1.0 - a - b)
    })
}

fn distinct_entities(instances: &[PomoInstance]) -> usize {
    instances
        .iter()
        .map(|i| &i.kb_id)
        .collect::<BTreeSet<_>>()
        .len()
}

proptest! {
    #[test]
    fn splits_are_entity_disjoint_partitions(instances in strategies::instances(12, 40), r in ratios(), seed in 0u64..100) {
        prop_assume!(distinct_entities(&instances) >= 3);
        let split = split_dataset(&instances, r, seed).unwrap();
        let ids: Vec<BTreeSet<&str>> =
            split.parts().iter().map(|(_, p)| p.iter().map(|i| i.kb_id.as_str()).collect()).collect();
        prop_assert!(ids[0].is_disjoint(&ids[1]) && ids[0].is_disjoint(&ids[2]) && ids[1].is_disjoint(&ids[2]));
        // Every instance lands in exactly one part, in input order within it.
        let total: usize = split.parts().iter().map(|(_, p)| p.len()).sum();
        prop_assert_eq!(total, instances.len());
        for (_, part) in split.parts() {
            let pos: Vec<usize> = part.iter().map(|i| instances.iter().position(|x| x == i).unwrap()).collect();
            prop_assert!(pos.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn splits_depend_only_on_the_seed(instances in strategies::instances(12, 40), seed in any::<u64>()) {
        prop_assume!(distinct_entities(&instances) >= 3);
        let r = (0.6, 0.2, 0.2);
        prop_assert_eq!(split_dataset(&instances, r, seed).unwrap(), split_dataset(&instances, r, seed).unwrap());
    }

    #[test]
    fn serialization_round_trip(instances in strategies::instances(12, 20)) {
        let mut buf = Vec::new();
        write_instances(&instances, &mut buf).unwrap();
        prop_assert_eq!(parse_instances(buf.as_slice(), "mem").unwrap(), instances);
    }

    #[test]
    fn fact_type_counts_match_a_recount(instances in strategies::instances(12, 30)) {
        let stats = dataset_stats(&instances);
        let mut expected: BTreeMap<String, usize> = BTreeMap::new();
        for inst in &instances {
            for c in &inst.claims {
                if c.relevant {
                    *expected.entry(c.key.clone()).or_default() += 1;
                }
            }
        }
        let got: BTreeMap<String, usize> = stats.fact_type_counts.iter().cloned().collect();
        prop_assert_eq!(got, expected);
        prop_assert!(stats.fact_type_counts.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        prop_assert_eq!(stats.instances, instances.len());
    }
}
