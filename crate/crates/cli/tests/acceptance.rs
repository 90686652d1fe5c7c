//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Runs without the libtest harness. `POMO_ACCEPTANCE=2,4` restricts the run
//! to the listed criteria.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pomo_core::claim_select::{
    fact_type_ranking, score_all, select_most_common, sweep_n, train_selector, MostCommon,
    OptimizerKind, SelModelConfig, SelectRule, DEFAULT_TAU,
};
use pomo_core::corpus_io::{load_parsed_corpus, Source};
use pomo_core::dataset::{split_dataset, InstanceClaim, PomoInstance, DEFAULT_RATIOS};
use pomo_core::eval_metrics::{bleu, bow_prf, meteor_lite};
use pomo_core::extraction::{extract_from_corpus, read_candidates, ExtractOptions};
use pomo_core::generation::{
    build_vocab, claim_probabilities, prepare_examples, train_generator, Architecture,
    AuxAggregation, ClaimSource, GenExample, GenModel, GenModelConfig, LossParts,
};
use pomo_core::kb_link::{link_entity, Claim, KBEntity, KbStore, DEFAULT_THRESHOLD};
use pomo_core::synthetic::{copy_task, copy_task_with_mentions, selection_task};
use pomo_nn::{Grads, Graph, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

fn extraction_gold() -> Outcome {
    let fx = common::fixtures();
    let docs = load_parsed_corpus(&fx.join("corpus.jsonl")).map_err(|e| e.to_string())?;
    let got: Vec<_> = extract_from_corpus(docs, ExtractOptions::default())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let gold = read_candidates(&fx.join("gold_candidates.jsonl")).map_err(|e| e.to_string())?;
    let matching = got.iter().zip(&gold).filter(|(a, b)| a == b).count();
    check(
        got == gold,
        format!(
            "{matching} of {} gold candidates reproduced, {} extracted",
            gold.len(),
            got.len()
        ),
    )
}

// ---------------------------------------------------------------- 2

const WORDS: [&str; 16] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
    "kilo", "lima", "mike", "november", "oscar", "papa",
];

fn entity(id: &str, claims: Vec<Claim>) -> KBEntity {
    KBEntity {
        kb_id: id.into(),
        label: "Pat Doe".into(),
        aliases: Vec::new(),
        claims,
    }
}

fn linking_boundary() -> Outcome {
    // Ten content words, three of them covered by a relevant claim.
    let pm10 = WORDS[..10].join(" ");
    let kb = KbStore::from_entities(vec![entity(
        "Q1",
        vec![Claim::new("award", "alpha bravo charlie")],
    )])
    .unwrap();
    let at = link_entity("Pat Doe", &pm10, &kb, DEFAULT_THRESHOLD);
    let at_cov = at.as_ref().map(|r| r.coverage);
    // Seven content words, two covered.
    let pm7 = WORDS[..7].join(" ");
    let kb7 = KbStore::from_entities(vec![entity("Q2", vec![Claim::new("award", "alpha bravo")])])
        .unwrap();
    let below = link_entity("Pat Doe", &pm7, &kb7, DEFAULT_THRESHOLD);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut linked = 0;
    for case in 0..1000 {
        let pm_len = rng.gen_range(1..=8);
        let pm: Vec<&str> = WORDS.choose_multiple(&mut rng, pm_len).copied().collect();
        let entities: Vec<KBEntity> = (0..rng.gen_range(1..=3))
            .map(|e| {
                let claims = (0..rng.gen_range(1..=5))
                    .map(|c| {
                        let n = rng.gen_range(1..=3);
                        let value: Vec<&str> =
                            WORDS.choose_multiple(&mut rng, n).copied().collect();
                        Claim::new(format!("k{c}"), value.join(" "))
                    })
                    .collect();
                entity(&format!("Q{case}_{e}"), claims)
            })
            .collect();
        let kb = KbStore::from_entities(entities).unwrap();
        let pm = pm.join(" ");
        let mut ts: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..=1.0)).collect();
        ts.sort_by(f64::total_cmp);
        let results: Vec<bool> = ts
            .iter()
            .map(|&t| link_entity("Pat Doe", &pm, &kb, t).is_some())
            .collect();
        // Linked at a threshold implies linked at every lower one.
        if results.windows(2).any(|w| !w[0] && w[1]) {
            violations += 1;
        }
        linked += results.iter().filter(|&&r| r).count();
    }
    check(
        at_cov == Some(0.3) && below.is_none() && violations == 0,
        format!(
            "3/10 coverage {at_cov:?} accepted, 2/7 {}; monotonicity violations {violations}/1000 ({linked} links)",
            if below.is_none() { "rejected" } else { "ACCEPTED" }
        ),
    )
}

// ---------------------------------------------------------------- 3

fn synthetic_entities(seed: u64) -> Vec<PomoInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for e in 0..100 {
        let source = if e % 2 == 0 { Source::Nyt } else { Source::Cnn };
        for k in 0..rng.gen_range(1..=3) {
            out.push(PomoInstance {
                id: format!("{source}-e{e}-{k}"),
                source,
                entity_name: format!("Person {e}"),
                kb_id: format!("Q{e}"),
                prev_sentence: String::new(),
                sent_with_slot: format!("x {} y", pomo_core::extraction::PM_SLOT),
                pm_target: "the writer".into(),
                claims: vec![InstanceClaim {
                    key: "occupation".into(),
                    value: "writer".into(),
                    relevant: true,
                }],
            });
        }
    }
    out
}

fn split_properties() -> Outcome {
    let instances = synthetic_entities(3);
    let mut worst = 0.0f64;
    let mut overlaps = 0;
    for ratios in [DEFAULT_RATIOS, (0.8, 0.1, 0.1)] {
        let r = [ratios.0, ratios.1, ratios.2];
        for seed in 0..100 {
            let split = split_dataset(&instances, ratios, seed).map_err(|e| e.to_string())?;
            let ids: Vec<BTreeSet<&str>> = split
                .parts()
                .iter()
                .map(|(_, p)| p.iter().map(|i| i.kb_id.as_str()).collect())
                .collect();
            if !ids[0].is_disjoint(&ids[1])
                || !ids[0].is_disjoint(&ids[2])
                || !ids[1].is_disjoint(&ids[2])
            {
                overlaps += 1;
            }
            for source in [Source::Nyt, Source::Cnn] {
                let counts: Vec<usize> = split
                    .parts()
                    .iter()
                    .map(|(_, p)| p.iter().filter(|i| i.source == source).count())
                    .collect();
                let total: usize = counts.iter().sum();
                for (c, target) in counts.iter().zip(r) {
                    worst = worst.max((*c as f64 / total as f64 - target).abs());
                }
            }
        }
    }
    check(
        overlaps == 0 && worst <= 0.05,
        format!(
            "entity overlaps {overlaps}/200 splits; worst per-source deviation {:.1} points",
            worst * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 4

const MCC_KEYS: usize = 12;

fn random_claim_instances(rng: &mut ChaCha8Rng, n: usize) -> Vec<PomoInstance> {
    (0..n)
        .map(|i| {
            let claims = (0..rng.gen_range(1..=10))
                .map(|_| {
                    let k = rng.gen_range(0..MCC_KEYS);
                    // Low-numbered keys are relevant more often.
                    let p = 0.7 - 0.05 * k as f64;
                    InstanceClaim {
                        key: format!("key{k:02}"),
                        value: format!("v{}", rng.gen_range(0..50)),
                        relevant: rng.gen_bool(p),
                    }
                })
                .collect();
            PomoInstance {
                id: format!("nyt-r{i}-0"),
                source: Source::Nyt,
                entity_name: format!("P{i}"),
                kb_id: format!("Q{i}"),
                prev_sentence: String::new(),
                sent_with_slot: pomo_core::extraction::PM_SLOT.into(),
                pm_target: "x".into(),
                claims,
            }
        })
        .collect()
}

/// The size-`n` claim subset whose sorted (rank, index) list is smallest,
/// found by enumerating every subset. Unranked keys share the last rank.
fn brute_force_mcc(inst: &PomoInstance, train: &[PomoInstance], n: usize) -> BTreeSet<usize> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in train {
        for c in t.claims.iter().filter(|c| c.relevant) {
            *counts.entry(&c.key).or_default() += 1;
        }
    }
    let rank = |key: &str| -> usize {
        match counts.get(key) {
            None => counts.len() + 1,
            Some(&mine) => {
                1 + counts
                    .iter()
                    .filter(|(k, &c)| c > mine || (c == mine && *k < &key))
                    .count()
            }
        }
    };
    let m = inst.claims.len();
    let size = n.min(m);
    let mut best: Option<(Vec<(usize, usize)>, u32)> = None;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let mut keyed: Vec<(usize, usize)> = (0..m)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| (rank(&inst.claims[i].key), i))
            .collect();
        keyed.sort();
        if best.as_ref().is_none_or(|(b, _)| keyed < *b) {
            best = Some((keyed, mask));
        }
    }
    let mask = best.map(|(_, m)| m).unwrap_or(0);
    (0..m).filter(|i| mask & (1 << i) != 0).collect()
}

fn mcc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let train = random_claim_instances(&mut rng, 300);
    let test = random_claim_instances(&mut rng, 500);
    let ranking = fact_type_ranking(&train);
    let mut mismatches = 0;
    for inst in &test {
        for n in 1..=5 {
            if select_most_common(inst, &ranking, n).selected != brute_force_mcc(inst, &train, n) {
                mismatches += 1;
            }
        }
    }
    let scores = score_all(&MostCommon::new(&ranking), &test, 64);
    let rows = sweep_n(&scores, &test, 1..=8);
    let recalls: Vec<f64> = rows.iter().map(|r| r.recall).collect();
    let monotone = recalls.windows(2).all(|w| w[1] >= w[0]);
    let shown: Vec<String> = recalls
        .iter()
        .map(|r| format!("{:.1}", r * 100.0))
        .collect();
    check(
        mismatches == 0 && monotone,
        format!(
            "{mismatches} mismatches over 500 instances x n=1..5; recall by n: {}",
            shown.join(" ")
        ),
    )
}

// ---------------------------------------------------------------- 5

fn selector_learning() -> Outcome {
    let data = selection_task(600, 11);
    let (train, valid) = data.split_at(500);
    let config = SelModelConfig {
        embedding_dim: 32,
        hidden: 64,
        layers: 2,
        keep_prob: 1.0,
        optimizer: OptimizerKind::Adam,
        learning_rate: 0.01,
        init_scale: 0.5,
        batch_size: 8,
        epochs: 20,
        top_n: 2,
        ..SelModelConfig::default()
    };
    let best_f1 = |rule: SelectRule| -> Result<f64, String> {
        let t = train_selector(train, valid, &config, rule).map_err(|e| e.to_string())?;
        Ok(t.log[t.best_epoch - 1].valid.f1)
    };
    let ranker = best_f1(SelectRule::TopN(2))?;
    let classifier = best_f1(SelectRule::Threshold(DEFAULT_TAU))?;
    // The baseline at its best cutoff.
    let ranking = fact_type_ranking(train);
    let scores = score_all(&MostCommon::new(&ranking), valid, 64);
    let mcc = sweep_n(&scores, valid, 1..=8)
        .iter()
        .map(|r| r.f1)
        .fold(0.0, f64::max);
    check(
        ranker >= 0.90 && ranker - mcc >= 0.10 && ranker >= classifier && classifier > mcc,
        format!("valid F1: ranker(n=2) {ranker:.3}, classifier(tau={DEFAULT_TAU}) {classifier:.3}, most-common(best n) {mcc:.3}"),
    )
}

// ---------------------------------------------------------------- 6

fn metric_oracles() -> Outcome {
    let pred = "the Bills ' offensive tackle";
    let reference = "Buffalo 's robust , 6-foot-6-inch , 325-pound right tackle";
    let p = bow_prf(pred, reference);
    let bow_ok = p.precision == 1.0 / 3.0 && p.recall == 1.0 / 6.0 && p.f1 == 2.0 / 9.0;
    let id = bleu(&["a b c d e"], &["a b c d e"]);
    let miss = bleu(&["a b c d"], &["a b c e"]);
    let m1 = meteor_lite("cat", "cat");
    let m3 = meteor_lite("the cat sat", "the cat sat");
    check(
        bow_ok && id == 1.0 && miss == 0.0 && m1 == 0.5 && (m3 - 0.9815).abs() < 1e-4,
        format!(
            "bow p/r/f1 {:.4}/{:.4}/{:.4}; BLEU {id} and {miss}; METEOR {m1} and {m3:.4}",
            p.precision, p.recall, p.f1
        ),
    )
}

// ---------------------------------------------------------------- 7

const GC_SAMPLES: usize = 50;
const GC_STEP: f64 = 1e-5;
const GC_TOL: f64 = 1e-4;

fn gradcheck(arch: Architecture, pick: fn(&LossParts) -> Var) -> f64 {
    let config = GenModelConfig {
        embedding_dim: 8,
        hidden: 8,
        layers: 1,
        keep_prob: 1.0,
        heads: 2,
        blocks: 1,
        model_dim: 8,
        ffn_dim: 16,
        max_output_len: 5,
        init_scale: 0.3,
        ..GenModelConfig::for_architecture(arch)
    };
    let instances = copy_task_with_mentions(3, 11, 1.0);
    let examples =
        prepare_examples(&instances, config.claim_source, config.max_input_len, None).unwrap();
    let vocab = build_vocab(&examples, 20);
    let mut model = GenModel::new(config, vocab).unwrap();
    let refs: Vec<&GenExample> = examples.iter().collect();
    let mut grads = Grads::zeros_like(&model.store);
    {
        let mut g = Graph::new(&model.store);
        let parts = model.loss(&mut g, &refs, None).unwrap();
        g.backward(pick(&parts), &mut grads);
    }
    let eval = |m: &GenModel| {
        let mut g = Graph::new(&m.store);
        let parts = m.loss(&mut g, &refs, None).unwrap();
        g.value(pick(&parts)).item()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = model.store.num_scalars();
    let mut worst = 0.0f64;
    for _ in 0..GC_SAMPLES {
        let (id, k) = model.store.locate(rng.gen_range(0..n)).unwrap();
        let orig = model.store.get(id).data()[k];
        model.store.get_mut(id).data_mut()[k] = orig + GC_STEP;
        let up = eval(&model);
        model.store.get_mut(id).data_mut()[k] = orig - GC_STEP;
        let down = eval(&model);
        model.store.get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * GC_STEP);
        let analytic = grads.get(id).data()[k];
        worst = worst.max((numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-4));
    }
    worst
}

fn gradient_checks() -> Outcome {
    let nll: fn(&LossParts) -> Var = |p| p.nll;
    let aux: fn(&LossParts) -> Var = |p| p.aux.expect("e2e has an aux loss");
    let cases = [
        ("e2e nll", gradcheck(Architecture::E2eClaimSelect, nll)),
        ("e2e aux", gradcheck(Architecture::E2eClaimSelect, aux)),
        (
            "copy bilstm nll",
            gradcheck(Architecture::BilstmConcat, nll),
        ),
        ("tri-encoder nll", gradcheck(Architecture::TriEncoder, nll)),
    ];
    let worst = cases.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let shown: Vec<String> = cases.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    check(
        worst < GC_TOL,
        format!(
            "worst relative error over {GC_SAMPLES} params: {}",
            shown.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- 8

fn micro_generator(arch: Architecture) -> GenModelConfig {
    GenModelConfig {
        embedding_dim: 32,
        hidden: 64,
        layers: 1,
        keep_prob: 1.0,
        batch_size: 16,
        eval_every: 500,
        ..GenModelConfig::for_architecture(arch)
    }
}

fn train_copy(
    instances: &[PomoInstance],
    n_valid: usize,
    config: &GenModelConfig,
) -> Result<GenModel, String> {
    let (train, valid) = instances.split_at(instances.len() - n_valid);
    let tr = prepare_examples(train, config.claim_source, config.max_input_len, None)
        .map_err(|e| e.to_string())?;
    let va = prepare_examples(valid, config.claim_source, config.max_input_len, None)
        .map_err(|e| e.to_string())?;
    Ok(train_generator(&tr, &va, config)
        .map_err(|e| e.to_string())?
        .model)
}

fn generation_ordering() -> Outcome {
    let data = copy_task(2000, 7);
    let (train, valid) = data.split_at(1800);
    let mut f1 = HashMap::new();
    for source in [ClaimSource::Oracle, ClaimSource::All, ClaimSource::None] {
        let config = GenModelConfig {
            claim_source: source,
            learning_rate: 1.0,
            total_steps: 5000,
            ..micro_generator(Architecture::BilstmConcat)
        };
        let tr = prepare_examples(train, source, config.max_input_len, None)
            .map_err(|e| e.to_string())?;
        let va = prepare_examples(valid, source, config.max_input_len, None)
            .map_err(|e| e.to_string())?;
        let t = train_generator(&tr, &va, &config).map_err(|e| e.to_string())?;
        let best = t
            .log
            .iter()
            .find(|l| l.step == t.best_step)
            .expect("best step is logged");
        f1.insert(source.to_string(), best.valid.f1);
    }
    let (o, a, n) = (f1["oracle"], f1["all"], f1["none"]);
    check(
        o - a >= 0.05 && a - n >= 0.05 && o >= 0.8,
        format!("valid bag-of-words F1: oracle {o:.3} > all {a:.3} > context-only {n:.3}"),
    )
}

// ---------------------------------------------------------------- 9

fn e2e_aux_behavior() -> Outcome {
    let data = copy_task_with_mentions(6000, 7, 1.0);
    let config = GenModelConfig {
        aux_aggregation: AuxAggregation::Sum,
        aux_weight: 2.0,
        optimizer: OptimizerKind::Adam,
        learning_rate: 0.003,
        warmup_steps: 0,
        total_steps: 6000,
        ..micro_generator(Architecture::E2eClaimSelect)
    };
    let model = train_copy(&data, 200, &config)?;
    let valid = &data[data.len() - 200..];
    let va = prepare_examples(valid, config.claim_source, config.max_input_len, None)
        .map_err(|e| e.to_string())?;
    let probs = claim_probabilities(&model, &va).map_err(|e| e.to_string())?;
    let (mut rel, mut irr) = (Vec::new(), Vec::new());
    for (e, ps) in va.iter().zip(&probs) {
        for (&r, &p) in e.relevant.iter().zip(ps) {
            if r {
                rel.push(p)
            } else {
                irr.push(p)
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (mr, mi) = (mean(&rel), mean(&irr));
    check(
        mr - mi >= 0.2,
        format!(
            "mean claim probability relevant {mr:.3} vs irrelevant {mi:.3} (gap {:.3})",
            mr - mi
        ),
    )
}

// ---------------------------------------------------------------- 10

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [(1, 1), (1, 1), (1, 2)];
    let dirs: Vec<_> = (0..runs.len())
        .map(|i| tmp.path().join(format!("run{i}")))
        .collect();
    let outputs: Vec<_> = runs
        .iter()
        .zip(&dirs)
        .map(|(&(seed, jobs), d)| common::run_pipeline(d, seed, jobs))
        .collect();
    let mut differing = Vec::new();
    let mut compared = 0;
    for (i, first) in outputs[0].iter().enumerate() {
        let rel = first.strip_prefix(&dirs[0]).unwrap();
        let bytes = fs::read(first).map_err(|e| e.to_string())?;
        for other in &outputs[1..] {
            compared += 1;
            if fs::read(&other[i]).map_err(|e| e.to_string())? != bytes {
                differing.push(rel.display().to_string());
            }
        }
    }
    let manifests = common::manifests(&dirs[0]);
    for m in &manifests {
        let base = common::manifest_without_time(&dirs[0].join(m));
        for d in &dirs[1..] {
            compared += 1;
            let mut other = common::manifest_without_time(&d.join(m));
            // argv differs only in --jobs.
            other["argv"] = base["argv"].clone();
            if other != base {
                differing.push(m.display().to_string());
            }
        }
    }
    let unique: HashSet<_> = differing.iter().collect();
    check(
        differing.is_empty(),
        format!(
            "{} stage outputs and {} manifests, 2 reruns (jobs 1 and 2): {compared} comparisons, {} differ {:?}",
            outputs[0].len(),
            manifests.len(),
            unique.len(),
            unique
        ),
    )
}

// ----------------------------------------------------------------

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "extraction gold",
            budget: Duration::from_secs(1),
            run: extraction_gold,
        },
        Criterion {
            id: 2,
            name: "linking boundary",
            budget: Duration::from_secs(5),
            run: linking_boundary,
        },
        Criterion {
            id: 3,
            name: "split properties",
            budget: Duration::from_secs(10),
            run: split_properties,
        },
        Criterion {
            id: 4,
            name: "most-common oracle",
            budget: Duration::from_secs(10),
            run: mcc_oracle,
        },
        Criterion {
            id: 5,
            name: "selector learning",
            budget: Duration::from_secs(300),
            run: selector_learning,
        },
        Criterion {
            id: 6,
            name: "metric oracles",
            budget: Duration::from_secs(1),
            run: metric_oracles,
        },
        Criterion {
            id: 7,
            name: "gradient checks",
            budget: Duration::from_secs(60),
            run: gradient_checks,
        },
        Criterion {
            id: 8,
            name: "generation ordering",
            budget: Duration::from_secs(1800),
            run: generation_ordering,
        },
        Criterion {
            id: 9,
            name: "e2e aux behavior",
            budget: Duration::from_secs(1800),
            run: e2e_aux_behavior,
        },
        Criterion {
            id: 10,
            name: "determinism",
            budget: Duration::from_secs(120),
            run: determinism,
        },
    ];
    let only: Option<BTreeSet<u32>> = std::env::var("POMO_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.id)))
    {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let in_time = took <= c.budget;
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<20} {}  {detail}  [{:.2}s, budget {}s{}]",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { ", over budget" },
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
