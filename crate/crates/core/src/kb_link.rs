//! Claim store, claim-overlap entity linking, and linker agreement.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{content_word_set, normalize};

pub const DEFAULT_THRESHOLD: f64 = 0.30;
pub const DEFAULT_RHO: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Claim {
    pub key: String,
    pub value: String,
}

impl Claim {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Claim {
            key: key.into(),
            value: value.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KBEntity {
    pub kb_id: String,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub claims: Vec<Claim>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkResult {
    pub kb_id: String,
    pub coverage: f64,
    /// Aligned with the entity's claim list.
    pub relevant: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkConfig {
    /// Minimum fraction of post-modifier content words the relevant claims must cover.
    pub threshold: f64,
    /// Fraction of a claim value's content words that must occur in the post-modifier.
    pub rho: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            threshold: DEFAULT_THRESHOLD,
            rho: DEFAULT_RHO,
        }
    }
}

fn fold_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Immutable entity store with case-folded label/alias lookup.
#[derive(Clone, Debug, Default)]
pub struct KbStore {
    entities: Vec<KBEntity>,
    by_id: HashMap<String, usize>,
    by_name: HashMap<String, Vec<usize>>,
}

impl KbStore {
    pub fn from_entities(entities: Vec<KBEntity>) -> Result<Self> {
        let mut store = KbStore::default();
        for e in entities {
            store.insert(e).map_err(Error::invalid)?;
        }
        Ok(store)
    }

    fn insert(&mut self, e: KBEntity) -> std::result::Result<(), String> {
        if e.kb_id.trim().is_empty() {
            return Err("empty kb_id".into());
        }
        if e.label.trim().is_empty() {
            return Err(format!("entity {} has an empty label", e.kb_id));
        }
        if let Some(c) = e
            .claims
            .iter()
            .find(|c| c.key.trim().is_empty() || c.value.trim().is_empty())
        {
            return Err(format!(
                "entity {} has a claim with an empty key or value: {c:?}",
                e.kb_id
            ));
        }
        if self.by_id.contains_key(&e.kb_id) {
            return Err(format!("duplicate kb_id {:?}", e.kb_id));
        }
        let idx = self.entities.len();
        let mut names: BTreeSet<String> = e.aliases.iter().map(|a| fold_name(a)).collect();
        names.insert(fold_name(&e.label));
        for n in names.into_iter().filter(|n| !n.is_empty()) {
            self.by_name.entry(n).or_default().push(idx);
        }
        self.by_id.insert(e.kb_id.clone(), idx);
        self.entities.push(e);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, kb_id: &str) -> Option<&KBEntity> {
        self.by_id.get(kb_id).map(|&i| &self.entities[i])
    }

    pub fn entities(&self) -> &[KBEntity] {
        &self.entities
    }

    /// Entities whose label or an alias equals `name` after case folding,
    /// ordered by kb_id.
    pub fn candidates(&self, name: &str) -> Vec<&KBEntity> {
        let mut out: Vec<&KBEntity> = self
            .by_name
            .get(&fold_name(name))
            .map(|ids| ids.iter().map(|&i| &self.entities[i]).collect())
            .unwrap_or_default();
        out.sort_by(|a, b| a.kb_id.cmp(&b.kb_id));
        out
    }
}

pub fn parse_kb<R: BufRead>(reader: R, location: &str) -> Result<KbStore> {
    let mut store = KbStore::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(location, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: KBEntity = serde_json::from_str(&line)
            .map_err(|e| Error::record(location, i + 1, e.to_string()))?;
        store
            .insert(e)
            .map_err(|m| Error::record(location, i + 1, m))?;
    }
    Ok(store)
}

pub fn load_kb(path: &Path) -> Result<KbStore> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_kb(BufReader::new(f), &path.display().to_string())
}

fn folded_tokens(text: &str) -> BTreeSet<String> {
    text.split_whitespace().filter_map(normalize).collect()
}

pub fn claim_relevance(claim: &Claim, pm_text: &str) -> bool {
    claim_relevance_with(claim, pm_text, DEFAULT_RHO)
}

/// True when at least `⌈rho·k⌉` of the value's `k` content words occur in the
/// post-modifier.
pub fn claim_relevance_with(claim: &Claim, pm_text: &str, rho: f64) -> bool {
    relevant_against(claim, &folded_tokens(pm_text), rho)
}

fn relevant_against(claim: &Claim, pm_tokens: &BTreeSet<String>, rho: f64) -> bool {
    let value = content_word_set(&claim.value);
    let k = value.len();
    if k == 0 {
        return false;
    }
    let hits = value.iter().filter(|w| pm_tokens.contains(*w)).count();
    // Equivalent to hits >= ceil(rho * k) for integer hits.
    hits as f64 >= rho * k as f64
}

/// Relevance flags and coverage of one entity against a post-modifier.
pub fn score_entity(entity: &KBEntity, pm_text: &str, rho: f64) -> (Vec<bool>, f64) {
    let pm_tokens = folded_tokens(pm_text);
    let relevant: Vec<bool> = entity
        .claims
        .iter()
        .map(|c| relevant_against(c, &pm_tokens, rho))
        .collect();
    let pm_content = content_word_set(pm_text);
    if pm_content.is_empty() {
        return (relevant, 0.0);
    }
    let covered_by: BTreeSet<String> = entity
        .claims
        .iter()
        .zip(&relevant)
        .filter(|(_, &r)| r)
        .flat_map(|(c, _)| content_word_set(&c.value))
        .collect();
    let covered = pm_content
        .iter()
        .filter(|w| covered_by.contains(*w))
        .count();
    (relevant, covered as f64 / pm_content.len() as f64)
}

pub fn link_entity(name: &str, pm_text: &str, kb: &KbStore, threshold: f64) -> Option<LinkResult> {
    link_entity_with(
        name,
        pm_text,
        kb,
        LinkConfig {
            threshold,
            ..LinkConfig::default()
        },
    )
}

/// Ranks exact-name candidates by relevant-claim count, then coverage, then
/// kb_id, and returns the first whose coverage reaches the threshold.
pub fn link_entity_with(
    name: &str,
    pm_text: &str,
    kb: &KbStore,
    cfg: LinkConfig,
) -> Option<LinkResult> {
    let mut scored: Vec<(usize, LinkResult)> = kb
        .candidates(name)
        .into_iter()
        .map(|e| {
            let (relevant, coverage) = score_entity(e, pm_text, cfg.rho);
            let count = relevant.iter().filter(|&&r| r).count();
            (
                count,
                LinkResult {
                    kb_id: e.kb_id.clone(),
                    coverage,
                    relevant,
                },
            )
        })
        .collect();
    scored.sort_by(|(ca, a), (cb, b)| {
        cb.cmp(ca)
            .then(b.coverage.total_cmp(&a.coverage))
            .then_with(|| a.kb_id.cmp(&b.kb_id))
    });
    scored
        .into_iter()
        .find(|(count, r)| *count > 0 && r.coverage >= cfg.threshold)
        .map(|(_, r)| r)
}

/// Percentage of shared names on which two linkers chose the same entity.
pub fn linker_agreement<S: std::hash::BuildHasher>(
    a: &HashMap<String, String, S>,
    b: &HashMap<String, String, S>,
) -> Result<f64> {
    let mut shared = 0usize;
    let mut agree = 0usize;
    for (k, va) in a {
        if let Some(vb) = b.get(k) {
            shared += 1;
            if va == vb {
                agree += 1;
            }
        }
    }
    if shared == 0 {
        return Err(Error::invalid("linker outputs share no names"));
    }
    Ok(100.0 * agree as f64 / shared as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entity(id: &str, label: &str, aliases: &[&str], claims: &[(&str, &str)]) -> KBEntity {
        KBEntity {
            kb_id: id.into(),
            label: label.into(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
            claims: claims.iter().map(|&(k, v)| Claim::new(k, v)).collect(),
        }
    }

    #[test]
    fn lookup_by_alias_and_shared_labels() {
        let kb = KbStore::from_entities(vec![
            entity("Q1", "John Smith", &[], &[]),
            entity("Q2", "John Smith", &["Johnny"], &[]),
            entity("Q3", "Ann Lee", &["Annie Lee"], &[]),
        ])
        .unwrap();
        assert_eq!(kb.candidates("annie LEE")[0].kb_id, "Q3");
        assert!(kb.candidates("Nobody").is_empty());
        let ids: Vec<_> = kb
            .candidates("John Smith")
            .iter()
            .map(|e| e.kb_id.as_str())
            .collect();
        assert_eq!(ids, ["Q1", "Q2"]);
    }

    #[test]
    fn duplicate_id_and_malformed_lines_report_line_numbers() {
        let src = "{\"kb_id\":\"Q1\",\"label\":\"A\"}\n{\"kb_id\":\"Q1\",\"label\":\"B\"}\n";
        let err = parse_kb(src.as_bytes(), "kb").unwrap_err().to_string();
        assert!(err.contains("kb:2") && err.contains("duplicate"), "{err}");
        let err = parse_kb("\n{oops\n".as_bytes(), "kb")
            .unwrap_err()
            .to_string();
        assert!(err.contains("kb:2"), "{err}");
    }

    #[test]
    fn relevance_examples() {
        let chancellor = Claim::new("position held", "Chancellor of the Exchequer");
        assert!(claim_relevance(
            &chancellor,
            "a former chancellor of the exchequer"
        ));
        assert!(!claim_relevance(
            &Claim::new("mass", "325 pound"),
            "the Bills ' offensive tackle"
        ));
        assert!(!claim_relevance(&chancellor, ""));
        assert!(!claim_relevance(&Claim::new("x", "of the"), "of the"));
    }

    #[test]
    fn coverage_boundary_at_one_third() {
        let kb = KbStore::from_entities(vec![entity("Q1", "Ann", &[], &[("k", "alpha")])]).unwrap();
        let r = link_entity("Ann", "alpha beta gamma", &kb, 0.30).unwrap();
        assert!((r.coverage - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.relevant, vec![true]);
        assert!(link_entity("Ann", "beta gamma", &kb, 0.30).is_none());
    }

    #[test]
    fn more_relevant_claims_win() {
        let kb = KbStore::from_entities(vec![
            entity("Q1", "Ann", &[], &[("a", "alpha"), ("b", "zeta")]),
            entity("Q2", "Ann", &[], &[("a", "alpha"), ("b", "beta")]),
        ])
        .unwrap();
        assert_eq!(
            link_entity("Ann", "alpha beta", &kb, 0.30).unwrap().kb_id,
            "Q2"
        );
    }

    #[test]
    fn agreement_arithmetic() {
        let m = |pairs: &[(&str, &str)]| -> HashMap<String, String> {
            pairs
                .iter()
                .map(|&(k, v)| (k.to_string(), v.to_string()))
                .collect()
        };
        let a = m(&[("a", "1"), ("b", "2"), ("c", "3"), ("d", "4")]);
        assert_eq!(linker_agreement(&a, &a).unwrap(), 100.0);
        let b = m(&[("a", "1"), ("b", "9"), ("z", "0")]);
        assert_eq!(linker_agreement(&a, &b).unwrap(), 50.0);
        assert!(linker_agreement(&a, &m(&[("q", "1")])).is_err());
    }
}
