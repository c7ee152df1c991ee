#![allow(dead_code)]

use irsegrn::graph::{Mention, ParagraphRecord, Role};
use irsegrn::model::{ModelDims, ModelParams, Vocab};
use rand::seq::SliceRandom;
use rand::Rng;

pub const WORDS: [&str; 8] = ["the", "a", "met", "saw", "then", "first", "later", "."];
pub const NAMES: [&str; 6] = ["fox", "owl", "elk", "yak", "emu", "ram"];

pub fn tiny_dims(layers: usize) -> ModelDims {
    ModelDims {
        embed: 4,
        lstm_hidden: 3,
        entity: 3,
        mlp_hidden: 5,
        decoder_hidden: 4,
        attention: 4,
        grn_layers: layers,
    }
}

pub fn vocab() -> Vocab {
    Vocab::from_tokens(WORDS.iter().chain(NAMES.iter()).map(|s| s.to_string()))
}

pub fn tiny_model(layers: usize, seed: u64) -> ModelParams {
    ModelParams::new(tiny_dims(layers), vocab(), seed).unwrap()
}

/// Random paragraph with `n` sentences, random mentions and relations.
pub fn random_record<R: Rng>(rng: &mut R, n: usize, max_mentions: usize) -> ParagraphRecord {
    let mut sentences = Vec::with_capacity(n);
    let mut entities = Vec::new();
    for i in 0..n {
        let len = rng.gen_range(1..5);
        let mut s: Vec<String> = (0..len).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
        for _ in 0..rng.gen_range(0..=max_mentions) {
            let name = NAMES[rng.gen_range(0..NAMES.len())];
            s.push(name.to_string());
            let role = [Role::Subject, Role::Object, Role::Other][rng.gen_range(0..3)];
            entities.push(Mention {
                surface: name.to_string(),
                sentence_index: i,
                role,
            });
        }
        sentences.push(s);
    }
    let mut known: Vec<String> = entities.iter().map(|m| m.surface.clone()).collect();
    known.sort();
    known.dedup();
    let mut relations = Vec::new();
    if known.len() >= 2 {
        for _ in 0..rng.gen_range(0..3) {
            let a = known.choose(rng).unwrap().clone();
            let b = known.choose(rng).unwrap().clone();
            relations.push((a, b));
        }
    }
    ParagraphRecord {
        id: format!("r{n}"),
        sentences,
        entities,
        relations,
    }
}

/// Redraws every parameter uniformly from `[-scale, scale]`.
pub fn spread(model: &mut ModelParams, seed: u64, scale: f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        for v in model.store.values_mut(id) {
            *v = rng.gen_range(-scale..=scale);
        }
    }
}
