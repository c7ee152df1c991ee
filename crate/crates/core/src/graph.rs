//! Sentence-entity graphs with directed, complementary sentence-pair weights.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Syntactic role of an entity mention. Ordered by priority when several
/// mentions of one entity fall in the same sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Subject,
    Object,
    Other,
}

impl Role {
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Role::Subject => [1.0, 0.0, 0.0],
            Role::Object => [0.0, 1.0, 0.0],
            Role::Other => [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub surface: String,
    pub sentence_index: usize,
    pub role: Role,
}

/// One paragraph: sentences in gold order plus entity annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphRecord {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    pub entities: Vec<Mention>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<(String, String)>,
}

pub fn canonical(surface: &str) -> String {
    surface.trim().to_lowercase()
}

impl ParagraphRecord {
    pub fn validate(&self) -> Result<()> {
        if self.sentences.len() < 2 {
            return Err(Error::validation("sentences", "a paragraph needs at least 2 sentences"));
        }
        if let Some(i) = self.sentences.iter().position(|s| s.is_empty()) {
            return Err(Error::validation("sentences", format!("sentence {i} is empty")));
        }
        for m in &self.entities {
            if m.sentence_index >= self.sentences.len() {
                return Err(Error::validation(
                    "entities",
                    format!(
                        "mention `{}` points at sentence {} of {}",
                        m.surface,
                        m.sentence_index,
                        self.sentences.len()
                    ),
                ));
            }
            if canonical(&m.surface).is_empty() {
                return Err(Error::validation("entities", "empty mention surface"));
            }
        }
        let known: BTreeSet<String> = self.entities.iter().map(|m| canonical(&m.surface)).collect();
        for (a, b) in &self.relations {
            for s in [a, b] {
                if !known.contains(&canonical(s)) {
                    return Err(Error::validation("relations", format!("unknown entity `{s}`")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SeEdge {
    pub sentence: usize,
    pub entity: usize,
    pub role: Role,
}

/// Unordered sentence pairs `(i, i')` with `i < i'`.
pub type PairSet = BTreeSet<(usize, usize)>;

/// Sentence-entity graph whose sentence-sentence links carry two directed
/// weights `w(i,i')` and `w(i',i) = 1 - w(i,i')`.
///
/// Only `w(i,i')` for `i < i'` is stored, so the complement identity holds
/// by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IrseGraph {
    /// Sentences in presented order.
    pub sentences: Vec<Vec<String>>,
    /// Canonical entity surfaces, sorted.
    pub entities: Vec<String>,
    pub se_edges: Vec<SeEdge>,
    /// Related entity pairs `(j, j')` with `j < j'`.
    pub ee_edges: Vec<(usize, usize)>,
    ss: BTreeMap<(usize, usize), f64>,
}

/// Seeded uniform permutation of `0..n`.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// `inv[p[k]] = k`.
pub fn invert_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (k, &v) in p.iter().enumerate() {
        inv[v] = k;
    }
    inv
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &v in p {
        if v >= p.len() || seen[v] {
            return false;
        }
        seen[v] = true;
    }
    true
}

/// Builds the graph with sentences presented in a seeded random order.
/// Returns the graph and `presented_order`, where `presented_order[k]` is
/// the gold index of the sentence shown at position `k`.
pub fn build_graph(record: &ParagraphRecord, order_seed: u64) -> Result<(IrseGraph, Vec<usize>)> {
    record.validate()?;
    let order = seeded_permutation(record.sentences.len(), order_seed);
    let g = IrseGraph::with_order(record, &order)?;
    Ok((g, order))
}

impl IrseGraph {
    /// Builds the graph with an explicit presentation order
    /// (`order[k]` = gold index of presented sentence `k`).
    pub fn with_order(record: &ParagraphRecord, order: &[usize]) -> Result<Self> {
        record.validate()?;
        if order.len() != record.sentences.len() || !is_permutation(order) {
            return Err(Error::validation("order", "not a permutation of the sentences"));
        }
        let position = invert_permutation(order);
        let sentences = order.iter().map(|&gi| record.sentences[gi].clone()).collect();

        let entities: Vec<String> = record
            .entities
            .iter()
            .map(|m| canonical(&m.surface))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let entity_index: BTreeMap<&str, usize> =
            entities.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();

        // (sentence, entity) -> strongest role
        let mut roles: BTreeMap<(usize, usize), Role> = BTreeMap::new();
        for m in &record.entities {
            let j = entity_index[canonical(&m.surface).as_str()];
            let key = (position[m.sentence_index], j);
            roles
                .entry(key)
                .and_modify(|r| *r = (*r).min(m.role))
                .or_insert(m.role);
        }
        let se_edges: Vec<SeEdge> = roles
            .iter()
            .map(|(&(sentence, entity), &role)| SeEdge { sentence, entity, role })
            .collect();

        let mut by_entity: Vec<Vec<usize>> = vec![Vec::new(); entities.len()];
        for e in &se_edges {
            by_entity[e.entity].push(e.sentence);
        }
        let mut ss = BTreeMap::new();
        for sents in &by_entity {
            for (a, &i) in sents.iter().enumerate() {
                for &k in &sents[a + 1..] {
                    ss.insert((i.min(k), i.max(k)), 0.5);
                }
            }
        }

        let ee_edges: Vec<(usize, usize)> = record
            .relations
            .iter()
            .filter_map(|(a, b)| {
                let ja = entity_index[canonical(a).as_str()];
                let jb = entity_index[canonical(b).as_str()];
                (ja != jb).then_some((ja.min(jb), ja.max(jb)))
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();

        Ok(Self {
            sentences,
            entities,
            se_edges,
            ee_edges,
            ss,
        })
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.ss.len()
    }

    /// Linked sentence pairs `(i, i')`, `i < i'`, in ascending order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ss.keys().copied()
    }

    pub fn all_pairs(&self) -> PairSet {
        self.pairs().collect()
    }

    pub fn has_edge(&self, i: usize, k: usize) -> bool {
        self.ss.contains_key(&(i.min(k), i.max(k)))
    }

    /// Directed weight `w(i, k)`: the modeled probability that sentence `i`
    /// precedes sentence `k`.
    pub fn weight(&self, i: usize, k: usize) -> Option<f64> {
        if i < k {
            self.ss.get(&(i, k)).copied()
        } else {
            self.ss.get(&(k, i)).map(|w| 1.0 - w)
        }
    }

    /// Directed edges `(target, source, w(target, source))` in a fixed order.
    pub fn directed_edges(&self) -> Vec<(usize, usize, f64)> {
        self.ss
            .iter()
            .flat_map(|(&(i, k), &w)| [(i, k, w), (k, i, 1.0 - w)])
            .collect()
    }

    /// Stores `w` for `(i, k)` and `1 - w` for `(k, i)`.
    pub fn set_pair_weight(&mut self, i: usize, k: usize, w: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Range {
                what: "ss-edge weight",
                value: w,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let slot = self.ss.get_mut(&(i.min(k), i.max(k))).ok_or(Error::NoEdge(i, k))?;
        *slot = if i < k { w } else { 1.0 - w };
        Ok(())
    }

    /// Sets each linked pair to 1 in the direction from the earlier gold
    /// sentence to the later one. `gold_positions[k]` is the gold rank of
    /// presented sentence `k`.
    pub fn assign_gold_weights(&mut self, gold_positions: &[usize]) -> Result<()> {
        if gold_positions.len() != self.num_sentences() || !is_permutation(gold_positions) {
            return Err(Error::validation("gold_positions", "not a permutation of the sentences"));
        }
        for (&(i, k), w) in self.ss.iter_mut() {
            *w = if gold_positions[i] < gold_positions[k] { 1.0 } else { 0.0 };
        }
        Ok(())
    }

    /// Corrupts `round(eta * pairs)` pairs chosen uniformly without
    /// replacement: the direction holding weight >= 0.5 gets `u ~ U[0, 0.5)`
    /// and the other `1 - u`. Returns how many pairs were corrupted.
    pub fn inject_noise<R: Rng>(&mut self, eta: f64, rng: &mut R) -> usize {
        let eta = eta.clamp(0.0, 1.0);
        let n = self.ss.len();
        let count = (eta * n as f64).round() as usize;
        if count == 0 {
            return 0;
        }
        let keys: Vec<(usize, usize)> = self.ss.keys().copied().collect();
        let chosen = rand::seq::index::sample(rng, n, count).into_vec();
        for idx in chosen {
            let u: f64 = rng.gen_range(0.0..0.5);
            let w = self.ss.get_mut(&keys[idx]).expect("key from map");
            *w = if *w >= 0.5 { u } else { 1.0 - u };
        }
        count
    }

    /// Puts both weights of every listed pair back to 0.5.
    pub fn uncertain_reset(&mut self, pairs: &PairSet) -> Result<()> {
        if let Some(&(i, k)) = pairs.iter().find(|(i, k)| !self.ss.contains_key(&(*i, *k))) {
            return Err(Error::NoEdge(i, k));
        }
        for p in pairs {
            self.ss.insert(*p, 0.5);
        }
        Ok(())
    }

    pub fn reset_all_weights(&mut self) {
        self.ss.values_mut().for_each(|w| *w = 0.5);
    }

    pub fn all_weights_neutral(&self) -> bool {
        self.ss.values().all(|w| *w == 0.5)
    }

    /// Stored `(i, i', w(i,i'))` triples, `i < i'`.
    pub fn weight_table(&self) -> Vec<(usize, usize, f64)> {
        self.ss.iter().map(|(&(i, k), &w)| (i, k, w)).collect()
    }

    /// Entity surfaces split into tokens.
    pub fn entity_tokens(&self, j: usize) -> Vec<&str> {
        self.entities[j].split_whitespace().collect()
    }
}


#[cfg(test)]
pub(crate) use tests::sample_record;
