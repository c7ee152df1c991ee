//! Parameter layout of the full model and its checkpoint container.
//!
//! The store holds three encoder/GRN stacks. `initial.*` feeds the initial
//! pairwise classifier, `iterative.*` the iterative classifier and
//! `order.*` the pointer decoder. The later two are warm-started from the
//! first during training.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffkernel::{GruParams, Linear, LstmParams, ParamId, ParamStore, Tape, TensorRecord, Var};
use crate::error::{Error, Result};
use crate::graph::ParagraphRecord;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Layer sizes. Defaults are desk-scale; [`ModelDims::large_scale`] gives
/// the large configuration (embeddings 100, Bi-LSTM 512 per direction,
/// entities 150).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub embed: usize,
    pub lstm_hidden: usize,
    pub entity: usize,
    pub mlp_hidden: usize,
    pub decoder_hidden: usize,
    pub attention: usize,
    pub grn_layers: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            embed: 32,
            lstm_hidden: 64,
            entity: 32,
            mlp_hidden: 128,
            decoder_hidden: 64,
            attention: 64,
            grn_layers: 3,
        }
    }
}

impl ModelDims {
    pub fn large_scale() -> Self {
        Self {
            embed: 100,
            lstm_hidden: 512,
            entity: 150,
            mlp_hidden: 128,
            decoder_hidden: 512,
            attention: 512,
            grn_layers: 3,
        }
    }

    /// Sentence (and global) state size: both LSTM directions concatenated.
    pub fn sentence(&self) -> usize {
        2 * self.lstm_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.embed,
            self.lstm_hidden,
            self.entity,
            self.mlp_hidden,
            self.decoder_hidden,
            self.attention,
            self.grn_layers,
        ];
        if all.iter().any(|d| *d == 0) {
            return Err(Error::Config("all model dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Token vocabulary. Row 0 is the out-of-vocabulary row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

pub const OOV_TOKEN: &str = "<unk>";

impl Vocab {
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut sorted: Vec<String> = tokens.into_iter().map(|t| t.to_lowercase()).collect();
        sorted.sort();
        sorted.dedup();
        sorted.retain(|t| t != OOV_TOKEN);
        let mut all = vec![OOV_TOKEN.to_string()];
        all.extend(sorted);
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens: all, index }
    }

    /// Every sentence token and entity-surface token of the corpus.
    pub fn from_corpus(records: &[ParagraphRecord]) -> Self {
        Self::from_tokens(records.iter().flat_map(|r| {
            r.sentences
                .iter()
                .flatten()
                .cloned()
                .chain(r.entities.iter().flat_map(|m| m.surface.split_whitespace().map(String::from)))
                .collect::<Vec<_>>()
        }))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index
            .get(token)
            .or_else(|| self.index.get(&token.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderParams {
    pub embed: ParamId,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    /// Mean token embedding -> entity state.
    pub entity_proj: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct GrnParams {
    pub ss_gate: Linear,
    pub se_gate_sent: Linear,
    pub se_gate_ent: Linear,
    pub ee_gate: Linear,
    pub ent_to_sent: Linear,
    pub sent_to_ent: Linear,
    pub glob_to_ent: Linear,
    pub global_init: Linear,
    pub sent_gru: GruParams,
    pub ent_gru: GruParams,
    pub glob_gru: GruParams,
}

/// Sentence encoder plus graph recurrent network.
#[derive(Debug, Clone, Copy)]
pub struct NetParams {
    pub encoder: EncoderParams,
    pub grn: GrnParams,
}

/// Two-layer MLP scoring `[κ_i; κ_i']` as the probability that `i` precedes `i'`.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierParams {
    pub hidden: Linear,
    pub out: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderParams {
    pub lstm: LstmParams,
    pub start: ParamId,
    pub init: Linear,
    pub att_w: ParamId,
    pub att_u: ParamId,
    pub att_q: ParamId,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub initial_net: NetParams,
    pub iterative_net: NetParams,
    pub order_net: NetParams,
    pub initial_cls: ClassifierParams,
    pub iterative_cls: ClassifierParams,
    pub decoder: DecoderParams,
}

pub const INITIAL_PREFIX: &str = "initial.";
pub const ITERATIVE_PREFIX: &str = "iterative.";
pub const ORDER_PREFIX: &str = "order.";
pub const INITIAL_CLS_PREFIX: &str = "cls_initial.";
pub const ITERATIVE_CLS_PREFIX: &str = "cls_iterative.";
pub const DECODER_PREFIX: &str = "decoder.";

impl NetParams {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dims: &ModelDims, vocab_len: usize, rng: &mut R) -> Result<Self> {
        let ds = dims.sentence();
        let de = dims.entity;
        let p = |s: &str| format!("{prefix}{s}");
        let encoder = EncoderParams {
            embed: store.add_uniform(&p("enc.embed"), vec![vocab_len, dims.embed], rng)?,
            fwd: LstmParams::new(store, &p("enc.lstm_fwd"), dims.embed, dims.lstm_hidden, rng)?,
            bwd: LstmParams::new(store, &p("enc.lstm_bwd"), dims.embed, dims.lstm_hidden, rng)?,
            entity_proj: Linear::new(store, &p("enc.entity_proj"), dims.embed, de, true, rng)?,
        };
        let grn = GrnParams {
            ss_gate: Linear::new(store, &p("grn.ss_gate"), 2 * ds, ds, true, rng)?,
            se_gate_sent: Linear::new(store, &p("grn.se_gate_sent"), 2 * ds + 3, ds, true, rng)?,
            se_gate_ent: Linear::new(store, &p("grn.se_gate_ent"), 2 * de + 3, de, true, rng)?,
            ee_gate: Linear::new(store, &p("grn.ee_gate"), 2 * de, de, true, rng)?,
            ent_to_sent: Linear::new(store, &p("grn.ent_to_sent"), de, ds, true, rng)?,
            sent_to_ent: Linear::new(store, &p("grn.sent_to_ent"), ds, de, true, rng)?,
            glob_to_ent: Linear::new(store, &p("grn.glob_to_ent"), ds, de, true, rng)?,
            global_init: Linear::new(store, &p("grn.global_init"), ds, ds, true, rng)?,
            sent_gru: GruParams::new(store, &p("grn.sent_gru"), 4 * ds, ds, rng)?,
            ent_gru: GruParams::new(store, &p("grn.ent_gru"), dims.embed + 3 * de, de, rng)?,
            glob_gru: GruParams::new(store, &p("grn.glob_gru"), 2 * ds, ds, rng)?,
        };
        Ok(Self { encoder, grn })
    }
}

impl ClassifierParams {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dims: &ModelDims, rng: &mut R) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(store, &format!("{prefix}hidden"), 2 * dims.sentence(), dims.mlp_hidden, true, rng)?,
            out: Linear::new(store, &format!("{prefix}out"), dims.mlp_hidden, 1, true, rng)?,
        })
    }
}

impl DecoderParams {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dims: &ModelDims, rng: &mut R) -> Result<Self> {
        let ds = dims.sentence();
        let p = |s: &str| format!("{prefix}{s}");
        Ok(Self {
            lstm: LstmParams::new(store, &p("lstm"), ds, dims.decoder_hidden, rng)?,
            start: store.add_uniform(&p("start"), vec![1, ds], rng)?,
            init: Linear::new(store, &p("init"), ds, dims.decoder_hidden, true, rng)?,
            att_w: store.add_uniform(&p("att_w"), vec![dims.decoder_hidden, dims.attention], rng)?,
            att_u: store.add_uniform(&p("att_u"), vec![ds, dims.attention], rng)?,
            att_q: store.add_uniform(&p("att_q"), vec![dims.attention, 1], rng)?,
        })
    }
}

impl ModelParams {
    pub fn new(dims: ModelDims, vocab: Vocab, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let v = vocab.len();
        let initial_net = NetParams::new(&mut store, INITIAL_PREFIX, &dims, v, &mut rng)?;
        let iterative_net = NetParams::new(&mut store, ITERATIVE_PREFIX, &dims, v, &mut rng)?;
        let order_net = NetParams::new(&mut store, ORDER_PREFIX, &dims, v, &mut rng)?;
        let initial_cls = ClassifierParams::new(&mut store, INITIAL_CLS_PREFIX, &dims, &mut rng)?;
        let iterative_cls = ClassifierParams::new(&mut store, ITERATIVE_CLS_PREFIX, &dims, &mut rng)?;
        let decoder = DecoderParams::new(&mut store, DECODER_PREFIX, &dims, &mut rng)?;
        Ok(Self {
            dims,
            vocab,
            store,
            initial_net,
            iterative_net,
            order_net,
            initial_cls,
            iterative_cls,
            decoder,
        })
    }

    /// Sets every parameter to zero.
    pub fn zeroed(mut self) -> Self {
        let ids: Vec<_> = self.store.ids().collect();
        for id in ids {
            self.store.values_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        self
    }

    pub fn ids_with_prefixes(&self, prefixes: &[&str]) -> Vec<ParamId> {
        self.store
            .ids()
            .filter(|id| prefixes.iter().any(|p| self.store.get(*id).name.starts_with(p)))
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            dims: self.dims,
            vocab: self.vocab.tokens().to_vec(),
            params: self.store.to_snapshot(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        if ck.vocab.first().map(String::as_str) != Some(OOV_TOKEN) {
            return Err(Error::Checkpoint("vocabulary must start with the OOV token".into()));
        }
        let vocab = Vocab::from_tokens(ck.vocab.iter().cloned());
        if vocab.tokens() != ck.vocab.as_slice() {
            return Err(Error::Checkpoint("vocabulary is not sorted and unique".into()));
        }
        let mut model = ModelParams::new(ck.dims, vocab, 0)?;
        model.store.load_snapshot(&ck.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        Self::from_checkpoint(&ck)
    }

    /// Loads `token v1 ... vd` lines into the embedding rows of every
    /// encoder stack. Returns how many vocabulary tokens were found.
    pub fn load_pretrained_embeddings(&mut self, path: &Path) -> Result<usize> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let d = self.dims.embed;
        let mut found = 0;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<f64> = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: n + 1,
                    field: "vector".into(),
                    reason: e.to_string(),
                })?;
            if values.len() != d {
                return Err(Error::Parse {
                    line: n + 1,
                    field: "vector".into(),
                    reason: format!("expected {d} values, found {}", values.len()),
                });
            }
            let row = self.vocab.id(token);
            if row == 0 {
                continue;
            }
            found += 1;
            for net in [self.initial_net, self.iterative_net, self.order_net] {
                self.store.values_mut(net.encoder.embed)[row * d..(row + 1) * d].copy_from_slice(&values);
            }
        }
        Ok(found)
    }
}

/// On-disk parameter container.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: ModelDims,
    pub vocab: Vec<String>,
    pub params: BTreeMap<String, TensorRecord>,
}

/// Inverted dropout with its own seeded generator.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn apply(&mut self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let (r, c) = tape.dims(x);
        let keep = 1.0 - self.rate;
        let mask = (0..r * c)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        tape.mul_const(x, mask)
    }
}

/// Applies dropout if a dropout context is present.
pub fn maybe_dropout(tape: &mut Tape<'_>, x: Var, dropout: Option<&mut Dropout>) -> Result<Var> {
    match dropout {
        Some(d) => d.apply(tape, x),
        None => Ok(x),
    }
}
