//! Bi-LSTM sentence encoding and initial entity/global node states.

use crate::diffkernel::{lstm_step, LstmParams, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::IrseGraph;
use crate::model::{EncoderParams, GrnParams, Vocab};

pub fn token_ids(vocab: &Vocab, tokens: &[String]) -> Vec<usize> {
    tokens.iter().map(|t| vocab.id(t)).collect()
}

/// Runs one LSTM direction over a batch of id sequences of varying length
/// and returns the `rows x hidden` state after each row's last token.
/// Finished rows carry their state forward unchanged.
fn run_direction(tape: &mut Tape<'_>, embed: Var, seqs: &[Vec<usize>], p: &LstmParams) -> Result<Var> {
    let rows = seqs.len();
    let max_len = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let min_len = seqs.iter().map(Vec::len).min().unwrap_or(0);
    let mut h = tape.zeros(rows, p.hidden);
    let mut c = tape.zeros(rows, p.hidden);
    for t in 0..max_len {
        let ids: Vec<usize> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(0)).collect();
        let x = tape.gather(embed, &ids)?;
        let (h_new, c_new) = lstm_step(tape, x, (h, c), p)?;
        if t < min_len {
            h = h_new;
            c = c_new;
        } else {
            let keep: Vec<f64> = seqs
                .iter()
                .flat_map(|s| std::iter::repeat_n(if t < s.len() { 1.0 } else { 0.0 }, p.hidden))
                .collect();
            let hold: Vec<f64> = keep.iter().map(|k| 1.0 - k).collect();
            h = blend(tape, h_new, h, keep.clone(), hold.clone())?;
            c = blend(tape, c_new, c, keep, hold)?;
        }
    }
    Ok(h)
}

fn blend(tape: &mut Tape<'_>, new: Var, old: Var, keep: Vec<f64>, hold: Vec<f64>) -> Result<Var> {
    let a = tape.mul_const(new, keep)?;
    let b = tape.mul_const(old, hold)?;
    tape.add(a, b)
}

/// Encodes every sentence independently: `[h_fwd_last ; h_bwd_last]` per row.
pub fn encode_sentences(tape: &mut Tape<'_>, enc: &EncoderParams, vocab: &Vocab, sentences: &[Vec<String>]) -> Result<Var> {
    if let Some(i) = sentences.iter().position(Vec::is_empty) {
        return Err(Error::validation("sentences", format!("sentence {i} is empty")));
    }
    if sentences.is_empty() {
        return Err(Error::validation("sentences", "no sentences to encode"));
    }
    let fwd: Vec<Vec<usize>> = sentences.iter().map(|s| token_ids(vocab, s)).collect();
    let bwd: Vec<Vec<usize>> = fwd.iter().map(|s| s.iter().rev().copied().collect()).collect();
    let embed = tape.param(enc.embed);
    let hf = run_direction(tape, embed, &fwd, &enc.fwd)?;
    let hb = run_direction(tape, embed, &bwd, &enc.bwd)?;
    tape.concat(&[hf, hb])
}

pub fn encode_sentence(tape: &mut Tape<'_>, enc: &EncoderParams, vocab: &Vocab, tokens: &[String]) -> Result<Var> {
    encode_sentences(tape, enc, vocab, std::slice::from_ref(&tokens.to_vec()))
}

/// Mean token embedding of every entity surface (`J x embed`), or `None`
/// when the graph has no entities.
pub fn entity_embeddings(tape: &mut Tape<'_>, enc: &EncoderParams, vocab: &Vocab, graph: &IrseGraph) -> Result<Option<Var>> {
    let j = graph.num_entities();
    if j == 0 {
        return Ok(None);
    }
    let mut ids = Vec::new();
    let mut owner = Vec::new();
    let mut weights = Vec::new();
    for e in 0..j {
        let toks = graph.entity_tokens(e);
        let toks: Vec<&str> = if toks.is_empty() { vec![""] } else { toks };
        let w = 1.0 / toks.len() as f64;
        for t in toks {
            ids.push(vocab.id(t));
            owner.push(e);
            weights.push(w);
        }
    }
    let embed = tape.param(enc.embed);
    let rows = tape.gather(embed, &ids)?;
    Ok(Some(tape.segment_sum(rows, &owner, Some(weights), j)?))
}

/// Entity initial states: projected mean embeddings.
pub fn init_entities(tape: &mut Tape<'_>, enc: &EncoderParams, emb: Var) -> Result<Var> {
    enc.entity_proj.forward(tape, emb)
}

/// Single-surface convenience wrapper around [`entity_embeddings`] +
/// [`init_entities`].
pub fn init_entity(tape: &mut Tape<'_>, enc: &EncoderParams, vocab: &Vocab, surface: &str) -> Result<Var> {
    let toks: Vec<&str> = surface.split_whitespace().collect();
    let toks = if toks.is_empty() { vec![""] } else { toks };
    let ids: Vec<usize> = toks.iter().map(|t| vocab.id(t)).collect();
    let embed = tape.param(enc.embed);
    let rows = tape.gather(embed, &ids)?;
    let mean = tape.mean_rows(rows)?;
    init_entities(tape, enc, mean)
}

/// Global initial state: mean of the sentence states and the projected
/// entity states over all nodes, through a learned affine map.
pub fn init_global(tape: &mut Tape<'_>, grn: &GrnParams, sentences: Var, entities: Option<Var>) -> Result<Var> {
    let (i, _) = tape.dims(sentences);
    let j = entities.map_or(0, |e| tape.dims(e).0);
    let n = (i + j) as f64;
    let mut mean = tape.segment_sum(sentences, &vec![0; i], Some(vec![1.0 / n; i]), 1)?;
    if let Some(e) = entities {
        let proj = grn.ent_to_sent.forward(tape, e)?;
        let part = tape.segment_sum(proj, &vec![0; j], Some(vec![1.0 / n; j]), 1)?;
        mean = tape.add(mean, part)?;
    }
    grn.global_init.forward(tape, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffkernel::{lstm_step, sigmoid, ParamStore};
    use crate::graph::sample_record;
    use crate::model::{ModelDims, ModelParams};

    fn tiny_dims() -> ModelDims {
        ModelDims {
            embed: 3,
            lstm_hidden: 2,
            entity: 2,
            mlp_hidden: 2,
            decoder_hidden: 2,
            attention: 2,
            grn_layers: 1,
        }
    }

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn model() -> ModelParams {
        let vocab = Vocab::from_tokens(words("a b c d e the cat sat"));
        ModelParams::new(tiny_dims(), vocab, 7).unwrap()
    }

    #[test]
    fn zero_params_give_zero_vector() {
        let m = model().zeroed();
        let mut t = Tape::new(&m.store);
        let v = encode_sentence(&mut t, &m.order_net.encoder, &m.vocab, &words("the cat sat")).unwrap();
        assert_eq!(t.value(v), &[0.0; 4]);
    }

    #[test]
    fn empty_sentence_is_rejected() {
        let m = model();
        let mut t = Tape::new(&m.store);
        assert!(matches!(
            encode_sentence(&mut t, &m.order_net.encoder, &m.vocab, &[]),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn single_token_uses_one_step_each_way() {
        let m = model();
        let enc = m.order_net.encoder;
        let mut t = Tape::new(&m.store);
        let v = encode_sentence(&mut t, &enc, &m.vocab, &words("cat")).unwrap();
        let got = t.value(v).to_vec();
        let embed = t.param(enc.embed);
        let x = t.gather(embed, &[m.vocab.id("cat")]).unwrap();
        let (h0, c0) = (t.zeros(1, 2), t.zeros(1, 2));
        let (hf, _) = lstm_step(&mut t, x, (h0, c0), &enc.fwd).unwrap();
        let (hb, _) = lstm_step(&mut t, x, (h0, c0), &enc.bwd).unwrap();
        assert_eq!(&got[..2], t.value(hf));
        assert_eq!(&got[2..], t.value(hb));
    }

    /// Scalar LSTM trace written out by hand for two tokens.
    #[test]
    fn two_token_hand_trace() {
        let dims = ModelDims {
            embed: 1,
            lstm_hidden: 1,
            ..tiny_dims()
        };
        let vocab = Vocab::from_tokens(words("x y"));
        let mut m = ModelParams::new(dims, vocab, 0).unwrap().zeroed();
        let enc = m.order_net.encoder;
        // embeddings: x -> 1.0, y -> -2.0
        m.store.values_mut(enc.embed).copy_from_slice(&[0.0, 1.0, -2.0]);
        // gates (i, f, o, candidate)
        let w = [0.5, -0.3, 0.8, 1.2];
        let u = [0.1, 0.4, -0.2, 0.7];
        let b = [0.0, 1.0, 0.1, -0.1];
        for p in [enc.fwd, enc.bwd] {
            m.store.values_mut(p.w).copy_from_slice(&w);
            m.store.values_mut(p.u).copy_from_slice(&u);
            m.store.values_mut(p.b).copy_from_slice(&b);
        }
        let step = |x: f64, h: f64, c: f64| {
            let pre: Vec<f64> = (0..4).map(|k| w[k] * x + u[k] * h + b[k]).collect();
            let (i, f, o, g) = (sigmoid(pre[0]), sigmoid(pre[1]), sigmoid(pre[2]), pre[3].tanh());
            let c2 = f * c + i * g;
            (o * c2.tanh(), c2)
        };
        let (h1, c1) = step(1.0, 0.0, 0.0);
        let (hf, _) = step(-2.0, h1, c1);
        let (h1, c1) = step(-2.0, 0.0, 0.0);
        let (hb, _) = step(1.0, h1, c1);

        let mut t = Tape::new(&m.store);
        let v = encode_sentence(&mut t, &enc, &m.vocab, &words("x y")).unwrap();
        assert!((t.value(v)[0] - hf).abs() < 1e-14);
        assert!((t.value(v)[1] - hb).abs() < 1e-14);
    }

    #[test]
    fn batch_rows_match_individual_encodings() {
        let m = model();
        let enc = m.order_net.encoder;
        let sents = vec![words("the cat sat"), words("a"), words("b c d e a")];
        let mut t = Tape::new(&m.store);
        let all = encode_sentences(&mut t, &enc, &m.vocab, &sents).unwrap();
        for (i, s) in sents.iter().enumerate() {
            let one = encode_sentence(&mut t, &enc, &m.vocab, s).unwrap();
            assert_eq!(t.row(all, i), t.value(one));
        }
    }

    #[test]
    fn reversal_swaps_halves_with_tied_directions() {
        let m = model();
        let mut enc = m.order_net.encoder;
        enc.bwd = enc.fwd;
        let mut t = Tape::new(&m.store);
        let a = encode_sentence(&mut t, &enc, &m.vocab, &words("the cat sat down")).unwrap();
        let b = encode_sentence(&mut t, &enc, &m.vocab, &words("down sat cat the")).unwrap();
        let (a, b) = (t.value(a).to_vec(), t.value(b).to_vec());
        assert_eq!(&a[..2], &b[2..]);
        assert_eq!(&a[2..], &b[..2]);
    }

    #[test]
    fn entity_init_examples() {
        let vocab = Vocab::from_tokens(words("red box"));
        let mut m = ModelParams::new(tiny_dims(), vocab, 1).unwrap();
        let enc = m.order_net.encoder;
        let proj_w = enc.entity_proj.w;
        let eye = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        m.store.values_mut(proj_w).copy_from_slice(&eye);
        m.store.values_mut(enc.entity_proj.b.unwrap()).copy_from_slice(&[0.0, 0.0]);
        let emb = m.store.tensor(enc.embed).values().to_vec();
        let row = |r: usize| &emb[r * 3..r * 3 + 2];

        let mut t = Tape::new(&m.store);
        let one = init_entity(&mut t, &enc, &m.vocab, "box").unwrap();
        assert_eq!(t.value(one), row(m.vocab.id("box")));

        let two = init_entity(&mut t, &enc, &m.vocab, "red box").unwrap();
        let (r, b) = (row(m.vocab.id("red")), row(m.vocab.id("box")));
        for k in 0..2 {
            assert!((t.value(two)[k] - (r[k] + b[k]) / 2.0).abs() < 1e-15);
        }

        let oov = init_entity(&mut t, &enc, &m.vocab, "zebra crossing").unwrap();
        assert_eq!(t.value(oov), row(0));
    }

    #[test]
    fn entity_init_ignores_mention_order() {
        let m = model();
        let mut rec = sample_record();
        let g1 = IrseGraph::with_order(&rec, &[0, 1, 2, 3]).unwrap();
        rec.entities.reverse();
        let g2 = IrseGraph::with_order(&rec, &[0, 1, 2, 3]).unwrap();
        let enc = m.order_net.encoder;
        let mut t = Tape::new(&m.store);
        let a = entity_embeddings(&mut t, &enc, &m.vocab, &g1).unwrap().unwrap();
        let b = entity_embeddings(&mut t, &enc, &m.vocab, &g2).unwrap().unwrap();
        assert_eq!(t.value(a), t.value(b));
    }

    #[test]
    fn global_init_examples() {
        let m = model().zeroed();
        let grn = m.order_net.grn;
        let mut t = Tape::new(&m.store);
        let s = t.constant_values(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let g = init_global(&mut t, &grn, s, None).unwrap();
        assert_eq!(t.value(g), &[0.0; 4]);

        // identity global map: mean of two equal rows is the row itself
        let mut store: ParamStore = m.store.clone();
        let w = grn.global_init.w;
        let mut eye = vec![0.0; 16];
        (0..4).for_each(|k| eye[k * 4 + k] = 1.0);
        store.values_mut(w).copy_from_slice(&eye);
        let mut t = Tape::new(&store);
        let s = t.constant_values(2, 4, vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        let g = init_global(&mut t, &grn, s, None).unwrap();
        assert_eq!(t.value(g), &[1.0, 2.0, 3.0, 4.0]);

        // one sentence + one entity: entity projected with ent_to_sent (bias only here)
        store.values_mut(grn.ent_to_sent.b.unwrap()).copy_from_slice(&[2.0, 0.0, 0.0, -4.0]);
        let mut t = Tape::new(&store);
        let s = t.constant_values(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let e = t.constant_values(1, 2, vec![9.0, 9.0]);
        let g = init_global(&mut t, &grn, s, Some(e)).unwrap();
        assert_eq!(t.value(g), &[1.5, 1.0, 1.5, 0.0]);
    }
}
