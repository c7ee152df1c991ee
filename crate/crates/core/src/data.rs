//! Corpus I/O, deterministic splits, paragraph shuffling and the synthetic
//! corpus generator.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{seeded_permutation, Mention, ParagraphRecord, Role};

/// Parses one JSONL line, naming the offending field on failure.
pub fn parse_record(line_no: usize, line: &str) -> Result<ParagraphRecord> {
    let de = &mut serde_json::Deserializer::from_str(line);
    let rec: ParagraphRecord = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::Parse {
            line: line_no,
            field: if field == "." { "record".into() } else { field },
            reason: e.into_inner().to_string(),
        }
    })?;
    rec.validate().map_err(|e| match e {
        Error::Validation { field, reason } => Error::Parse {
            line: line_no,
            field,
            reason,
        },
        other => other,
    })?;
    Ok(rec)
}

/// Reads a JSONL corpus. Blank lines are skipped; line numbers are 1-based.
pub fn load_corpus(path: &Path) -> Result<Vec<ParagraphRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(i + 1, &line)?);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[ParagraphRecord]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Seeded shuffle followed by a contiguous train/validation/test partition.
/// Validation and test get `max(1, floor(n * r / sum))` records each and
/// train keeps the remainder.
pub fn split_corpus(records: &[ParagraphRecord], ratios: (u32, u32, u32), seed: u64) -> Result<(Vec<ParagraphRecord>, Vec<ParagraphRecord>, Vec<ParagraphRecord>)> {
    let (a, b, c) = ratios;
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::Config("split ratios must be positive".into()));
    }
    let n = records.len();
    if n < 3 {
        return Err(Error::Size(format!("cannot split {n} records into 3 parts")));
    }
    let sum = (a + b + c) as usize;
    let n_val = (n * b as usize / sum).max(1);
    let n_test = (n * c as usize / sum).max(1);
    if n_val + n_test >= n {
        return Err(Error::Size(format!("{n} records leave no training data")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |r: &[usize]| r.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    let n_train = n - n_val - n_test;
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..n_train + n_val]), pick(&idx[n_train + n_val..])))
}

/// Presents the sentences in a seeded order. `gold_positions[k]` is the gold
/// index of presented sentence `k`.
pub fn shuffle_paragraph(record: &ParagraphRecord, seed: u64) -> (Vec<Vec<String>>, Vec<usize>) {
    let order = seeded_permutation(record.sentences.len(), seed);
    let presented = order.iter().map(|&g| record.sentences[g].clone()).collect();
    (presented, order)
}

/// Puts presented sentences back into gold order.
pub fn unshuffle(presented: &[Vec<String>], gold_positions: &[usize]) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new(); presented.len()];
    for (k, &g) in gold_positions.iter().enumerate() {
        out[g] = presented[k].clone();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_paragraphs: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub entity_pool: usize,
    pub min_entities: usize,
    pub max_entities: usize,
    pub cue_prob: f64,
    /// Chance that a sentence also mentions the paragraph's location.
    pub location_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_paragraphs: 2400,
            min_sentences: 4,
            max_sentences: 6,
            entity_pool: 40,
            min_entities: 3,
            max_entities: 5,
            cue_prob: 0.8,
            location_prob: 0.3,
            seed: 7,
        }
    }
}

const NOUNS: &[&str] = &[
    "fox", "hare", "crow", "otter", "badger", "heron", "wolf", "lynx", "owl", "mole", "stoat", "wren", "beaver", "falcon", "toad", "newt", "deer",
    "boar", "swan", "goose", "raven", "robin", "finch", "eagle", "bison", "moose", "llama", "camel", "tiger", "lion", "zebra", "panda", "koala",
    "lemur", "gecko", "cobra", "viper", "shark", "whale", "seal", "walrus", "crab", "squid", "trout", "salmon", "pike", "carp", "eel",
];

const VERBS: &[&str] = &[
    "greeted", "followed", "warned", "helped", "chased", "visited", "called", "met", "thanked", "watched", "fed", "found", "teased", "guided",
    "joined", "pushed",
];

const LOCATIONS: &[&str] = &["meadow", "river", "forest", "barn", "valley", "harbor", "orchard", "marsh"];

const ADVERBS: &[&str] = &["quietly", "slowly", "gladly", "warily", "boldly", "suddenly"];

/// Position marker for sentence `t` of `n`.
fn cue(t: usize, n: usize) -> &'static str {
    const ORD: &[&str] = &["first", "second", "third", "fourth", "fifth"];
    if t + 1 == n {
        "finally"
    } else {
        ORD.get(t).copied().unwrap_or("then")
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_sentences < 2 || self.min_sentences > self.max_sentences {
            return Err(Error::validation("min_sentences", "need 2 <= min_sentences <= max_sentences"));
        }
        if self.min_entities < 2 || self.min_entities > self.max_entities {
            return Err(Error::validation("min_entities", "need 2 <= min_entities <= max_entities"));
        }
        if self.entity_pool < self.max_entities || self.entity_pool > NOUNS.len() {
            return Err(Error::validation("entity_pool", format!("must lie in [max_entities, {}]", NOUNS.len())));
        }
        for (name, p) in [("cue_prob", self.cue_prob), ("location_prob", self.location_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(name, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Builds one paragraph. Sentence `t` has cast member `t mod E` as subject
/// and `t+1 mod E` as object, so neighbouring sentences always share an
/// entity. Articles are always "the" and carry no position information.
fn synth_paragraph(cfg: &SynthConfig, id: usize, rng: &mut ChaCha8Rng) -> ParagraphRecord {
    let n = rng.gen_range(cfg.min_sentences..=cfg.max_sentences);
    let e = rng.gen_range(cfg.min_entities..=cfg.max_entities);
    let cast: Vec<&str> = NOUNS[..cfg.entity_pool].choose_multiple(rng, e).copied().collect();
    let place = *LOCATIONS.choose(rng).expect("non-empty");
    let mut sentences = Vec::with_capacity(n);
    let mut entities = Vec::new();
    let mut cooccur: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for t in 0..n {
        let (s, o) = (t % e, (t + 1) % e);
        let mut toks: Vec<String> = Vec::new();
        if rng.gen_bool(cfg.cue_prob) {
            toks.push(cue(t, n).to_string());
        }
        toks.push("the".into());
        toks.push(cast[s].to_string());
        if rng.gen_bool(0.3) {
            toks.push(ADVERBS.choose(rng).expect("non-empty").to_string());
        }
        toks.push(VERBS.choose(rng).expect("non-empty").to_string());
        toks.push("the".into());
        toks.push(cast[o].to_string());
        let mut mentioned = vec![cast[s], cast[o]];
        entities.push(Mention {
            surface: cast[s].to_string(),
            sentence_index: t,
            role: Role::Subject,
        });
        entities.push(Mention {
            surface: cast[o].to_string(),
            sentence_index: t,
            role: Role::Object,
        });
        if rng.gen_bool(cfg.location_prob) {
            toks.push("near".into());
            toks.push("the".into());
            toks.push(place.to_string());
            mentioned.push(place);
            entities.push(Mention {
                surface: place.to_string(),
                sentence_index: t,
                role: Role::Other,
            });
        }
        toks.push(".".into());
        mentioned.sort_unstable();
        mentioned.dedup();
        for a in 0..mentioned.len() {
            for b in a + 1..mentioned.len() {
                *cooccur.entry((mentioned[a], mentioned[b])).or_default() += 1;
            }
        }
        sentences.push(toks);
    }
    let relations = cooccur
        .into_iter()
        .filter(|(_, c)| *c >= 2)
        .map(|((a, b), _)| (a.to_string(), b.to_string()))
        .collect();
    ParagraphRecord {
        id: format!("synth-{id:05}"),
        sentences,
        entities,
        relations,
    }
}

/// Deterministic synthetic corpus.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<ParagraphRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.n_paragraphs).map(|i| synth_paragraph(cfg, i, &mut rng)).collect())
}
