//! Dataset instances: assembly from linked candidates, entity-disjoint
//! splitting, serialization, and corpus statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus_io::Source;
use crate::error::{Error, Result};
use crate::extraction::{PMCandidate, PM_SLOT};
use crate::kb_link::{link_entity_with, KbStore, LinkConfig};
use crate::text::token_len;

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.955, 0.0225, 0.0225);
pub const OTHER_CATEGORY: &str = "other";
pub const OCCUPATION_KEY: &str = "occupation";

const OCCUPATIONS_FILE: &str = include_str!("../data/occupations.tsv");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceClaim {
    pub key: String,
    pub value: String,
    pub relevant: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PomoInstance {
    pub id: String,
    pub source: Source,
    pub entity_name: String,
    pub kb_id: String,
    pub prev_sentence: String,
    pub sent_with_slot: String,
    pub pm_target: String,
    pub claims: Vec<InstanceClaim>,
}

impl PomoInstance {
    /// Indices of claims flagged relevant.
    pub fn gold(&self) -> BTreeSet<usize> {
        self.claims
            .iter()
            .enumerate()
            .filter(|(_, c)| c.relevant)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        let slots = self
            .sent_with_slot
            .split_whitespace()
            .filter(|t| *t == PM_SLOT)
            .count();
        if slots != 1 {
            return Err(format!(
                "sent_with_slot has {slots} {PM_SLOT} tokens, expected 1"
            ));
        }
        if self.pm_target.trim().is_empty() {
            return Err("pm_target is empty".into());
        }
        if !self.claims.iter().any(|c| c.relevant) {
            return Err("no relevant claim".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<PomoInstance>,
    pub valid: Vec<PomoInstance>,
    pub test: Vec<PomoInstance>,
}

impl DatasetSplit {
    pub fn parts(&self) -> [(&'static str, &Vec<PomoInstance>); 3] {
        [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BuildCounts {
    pub linked: usize,
    pub dropped: usize,
}

pub fn instance_id(source: Source, doc_id: &str, sent_index: usize) -> String {
    format!("{source}-{doc_id}-{sent_index}")
}

/// Links every candidate; unlinked ones are dropped and counted.
pub fn build_instances<'a>(
    candidates: impl IntoIterator<Item = &'a PMCandidate>,
    kb: &KbStore,
    cfg: LinkConfig,
) -> (Vec<PomoInstance>, BuildCounts) {
    let mut out = Vec::new();
    let mut counts = BuildCounts::default();
    for c in candidates {
        let Some(link) = link_entity_with(&c.mention.name, &c.pm_text, kb, cfg) else {
            counts.dropped += 1;
            continue;
        };
        let entity = kb.get(&link.kb_id).expect("linked id is in the store");
        counts.linked += 1;
        out.push(PomoInstance {
            id: instance_id(c.source, &c.mention.doc_id, c.mention.sent_index),
            source: c.source,
            entity_name: c.mention.name.clone(),
            kb_id: link.kb_id,
            prev_sentence: c.prev_text.clone(),
            sent_with_slot: c.sent_with_slot.clone(),
            pm_target: c.pm_text.clone(),
            claims: entity
                .claims
                .iter()
                .zip(link.relevant)
                .map(|(cl, relevant)| InstanceClaim {
                    key: cl.key.clone(),
                    value: cl.value.clone(),
                    relevant,
                })
                .collect(),
        });
    }
    (out, counts)
}

/// Entity-disjoint split. Instances are grouped by kb_id; each group takes the
/// majority source of its instances. Within each source, groups are shuffled
/// and each goes whole to the part furthest below its target size.
pub fn split_dataset(
    instances: &[PomoInstance],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| x.is_nan() || x <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios {ratios:?} must be positive and sum to 1"
        )));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        groups.entry(&inst.kb_id).or_default().push(i);
    }
    if groups.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 distinct entities to split, found {}",
            groups.len()
        )));
    }
    let mut by_source: BTreeMap<&'static str, Vec<&Vec<usize>>> = BTreeMap::new();
    for members in groups.values() {
        let mut votes: BTreeMap<&'static str, usize> = BTreeMap::new();
        for &i in members {
            *votes.entry(instances[i].source.as_str()).or_default() += 1;
        }
        let primary = votes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(s, _)| *s)
            .expect("group is non-empty");
        by_source.entry(primary).or_default().push(members);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut part_of = vec![0usize; instances.len()];
    for (_, mut gs) in by_source {
        gs.shuffle(&mut rng);
        let total: usize = gs.iter().map(|g| g.len()).sum();
        let mut sizes = [0usize; 3];
        for g in gs {
            let deficit = |p: usize| r[p] * total as f64 - sizes[p] as f64;
            let mut best = 0;
            for p in 1..3 {
                if deficit(p) > deficit(best) {
                    best = p;
                }
            }
            sizes[best] += g.len();
            for &i in g {
                part_of[i] = best;
            }
        }
    }
    let mut split = DatasetSplit::default();
    for (inst, &p) in instances.iter().zip(&part_of) {
        match p {
            0 => split.train.push(inst.clone()),
            1 => split.valid.push(inst.clone()),
            _ => split.test.push(inst.clone()),
        }
    }
    Ok(split)
}

pub fn write_instances<'a, W: Write>(
    instances: impl IntoIterator<Item = &'a PomoInstance>,
    mut w: W,
) -> std::io::Result<()> {
    for inst in instances {
        writeln!(
            w,
            "{}",
            serde_json::to_string(inst).expect("instance serialization cannot fail")
        )?;
    }
    w.flush()
}

pub fn parse_instances<R: BufRead>(reader: R, location: &str) -> Result<Vec<PomoInstance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(location, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: PomoInstance = serde_json::from_str(&line)
            .map_err(|e| Error::record(location, i + 1, e.to_string()))?;
        inst.check()
            .map_err(|m| Error::record(location, i + 1, m))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn read_instances(path: &Path) -> Result<Vec<PomoInstance>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_instances(BufReader::new(f), &path.display().to_string())
}

pub fn write_instances_file(instances: &[PomoInstance], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_instances(instances, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn write_dataset(split: &DatasetSplit, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, part) in split.parts() {
        write_instances_file(part, &dir.join(format!("{name}.jsonl")))?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<DatasetSplit> {
    Ok(DatasetSplit {
        train: read_instances(&dir.join("train.jsonl"))?,
        valid: read_instances(&dir.join("valid.jsonl"))?,
        test: read_instances(&dir.join("test.jsonl"))?,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StatsReport {
    pub instances: usize,
    pub pm_length_histogram: BTreeMap<usize, usize>,
    pub pm_length_mean: f64,
    pub relevant_per_instance_histogram: BTreeMap<usize, usize>,
    /// Relevant claims per fact type, most frequent first (ties by key).
    pub fact_type_counts: Vec<(String, usize)>,
    pub source_counts: BTreeMap<String, usize>,
}

pub fn dataset_stats(instances: &[PomoInstance]) -> StatsReport {
    let mut report = StatsReport {
        instances: instances.len(),
        ..StatsReport::default()
    };
    let mut facts: HashMap<&str, usize> = HashMap::new();
    let mut total_len = 0usize;
    for inst in instances {
        let len = token_len(&inst.pm_target);
        total_len += len;
        *report.pm_length_histogram.entry(len).or_default() += 1;
        let relevant = inst.claims.iter().filter(|c| c.relevant);
        *report
            .relevant_per_instance_histogram
            .entry(relevant.clone().count())
            .or_default() += 1;
        for c in relevant {
            *facts.entry(&c.key).or_default() += 1;
        }
        *report
            .source_counts
            .entry(inst.source.to_string())
            .or_default() += 1;
    }
    if !instances.is_empty() {
        report.pm_length_mean = total_len as f64 / instances.len() as f64;
    }
    report.fact_type_counts = sort_counts(facts);
    report
}

/// Count descending, then key ascending.
pub(crate) fn sort_counts(counts: HashMap<&str, usize>) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(k, c)| (k.to_string(), c))
        .collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Case-folded occupation value to category.
#[derive(Clone, Debug, Default)]
pub struct OccupationMap {
    map: HashMap<String, String>,
}

impl OccupationMap {
    /// The bundled mapping.
    pub fn builtin() -> Self {
        Self::parse(OCCUPATIONS_FILE, "occupations.tsv")
            .expect("bundled occupation map is well formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, location: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (value, category) = line
                .split_once('\t')
                .ok_or_else(|| Error::record(location, i + 1, "expected value<TAB>category"))?;
            let (value, category) = (value.trim().to_lowercase(), category.trim().to_string());
            if value.is_empty() || category.is_empty() {
                return Err(Error::record(location, i + 1, "empty value or category"));
            }
            map.insert(value, category);
        }
        Ok(OccupationMap { map })
    }

    pub fn category(&self, value: &str) -> Option<&str> {
        self.map
            .get(&value.trim().to_lowercase())
            .map(String::as_str)
    }

    pub fn categories(&self) -> BTreeSet<&str> {
        self.map.values().map(String::as_str).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupationRow {
    pub category: String,
    pub count: usize,
    pub percentage: f64,
}

/// Entities (not instances) per occupation category. Each kb_id takes the
/// category of its first mapped occupation claim, else "other".
pub fn occupation_distribution(
    instances: &[PomoInstance],
    mapping: &OccupationMap,
) -> Vec<OccupationRow> {
    let mut category_of: BTreeMap<&str, &str> = BTreeMap::new();
    for inst in instances {
        category_of.entry(&inst.kb_id).or_insert_with(|| {
            inst.claims
                .iter()
                .filter(|c| c.key == OCCUPATION_KEY)
                .find_map(|c| mapping.category(&c.value))
                .unwrap_or(OTHER_CATEGORY)
        });
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for cat in category_of.values() {
        *counts.entry(cat).or_default() += 1;
    }
    let total = category_of.len();
    sort_counts(counts)
        .into_iter()
        .map(|(category, count)| OccupationRow {
            category,
            count,
            percentage: 100.0 * count as f64 / total as f64,
        })
        .collect()
}
