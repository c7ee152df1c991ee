//! Graph recurrent encoder over the sentence-entity graph.
//!
//! Each layer reads only the previous layer's states. Sentence-to-sentence
//! messages are gated per dimension and scaled by the directed ss-edge
//! weight `w(i,i')`.

use crate::diffkernel::{gru_cell, Tape, Var};
use crate::encode::{encode_sentences, entity_embeddings, init_entities, init_global};
use crate::error::Result;
use crate::graph::IrseGraph;
use crate::model::{GrnParams, NetParams, Vocab};

/// Node states at one layer.
#[derive(Debug, Clone, Copy)]
pub struct GrnState {
    /// `I x d_s`
    pub sentences: Var,
    /// `J x d_e`, absent when the graph has no entities.
    pub entities: Option<Var>,
    /// `1 x d_s`
    pub global: Var,
    pub layer: usize,
}

/// Layer-independent inputs: the layer-0 sentence encodings and the raw
/// entity embeddings.
#[derive(Debug, Clone, Copy)]
pub struct GraphInputs {
    pub kappa0: Var,
    pub entity_emb: Option<Var>,
}

/// Final encoder output handed to classifiers and the decoder.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub inputs: GraphInputs,
    pub state: GrnState,
}

fn role_matrix(tape: &mut Tape<'_>, graph: &IrseGraph) -> Var {
    let vals = graph.se_edges.iter().flat_map(|e| e.role.one_hot()).collect();
    tape.constant_values(graph.se_edges.len(), 3, vals)
}

/// Layer-0 states straight from the encoder.
pub fn initial_state(tape: &mut Tape<'_>, net: &NetParams, vocab: &Vocab, graph: &IrseGraph) -> Result<(GraphInputs, GrnState)> {
    let kappa0 = encode_sentences(tape, &net.encoder, vocab, &graph.sentences)?;
    let entity_emb = entity_embeddings(tape, &net.encoder, vocab, graph)?;
    let entities = match entity_emb {
        Some(e) => Some(init_entities(tape, &net.encoder, e)?),
        None => None,
    };
    let global = init_global(tape, &net.grn, kappa0, entities)?;
    Ok((
        GraphInputs { kappa0, entity_emb },
        GrnState {
            sentences: kappa0,
            entities,
            global,
            layer: 0,
        },
    ))
}

/// Sentence-level message `m_i` (weighted, from linked sentences) and
/// entity-level message `m̂_i` (from mentioned entities).
pub fn sentence_messages(tape: &mut Tape<'_>, grn: &GrnParams, graph: &IrseGraph, state: &GrnState) -> Result<(Var, Var)> {
    let m = ss_messages(tape, grn, state.sentences, &graph.directed_edges())?;
    let m_hat = se_messages(tape, grn, graph, state)?;
    Ok((m, m_hat))
}

/// `m_i = Σ w · σ(W[κ_i; κ_s]) ⊙ κ_s` over directed `(target i, source s, w)`
/// edges.
pub fn ss_messages(tape: &mut Tape<'_>, grn: &GrnParams, sentences: Var, edges: &[(usize, usize, f64)]) -> Result<Var> {
    let (n_sent, ds) = tape.dims(sentences);
    if edges.is_empty() {
        return Ok(tape.zeros(n_sent, ds));
    }
    let targets: Vec<usize> = edges.iter().map(|e| e.0).collect();
    let sources: Vec<usize> = edges.iter().map(|e| e.1).collect();
    let weights: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let kt = tape.gather(sentences, &targets)?;
    let ks = tape.gather(sentences, &sources)?;
    let pair = tape.concat(&[kt, ks])?;
    let pre = grn.ss_gate.forward(tape, pair)?;
    let gate = tape.sigmoid(pre)?;
    let msg = tape.mul(gate, ks)?;
    tape.segment_sum(msg, &targets, Some(weights), n_sent)
}

fn se_messages(tape: &mut Tape<'_>, grn: &GrnParams, graph: &IrseGraph, state: &GrnState) -> Result<Var> {
    let (n_sent, ds) = tape.dims(state.sentences);
    let m_hat = match state.entities {
        Some(ent) if !graph.se_edges.is_empty() => {
            let sent_idx: Vec<usize> = graph.se_edges.iter().map(|e| e.sentence).collect();
            let ent_idx: Vec<usize> = graph.se_edges.iter().map(|e| e.entity).collect();
            let ent_s = grn.ent_to_sent.forward(tape, ent)?;
            let ks = tape.gather(state.sentences, &sent_idx)?;
            let es = tape.gather(ent_s, &ent_idx)?;
            let roles = role_matrix(tape, graph);
            let inp = tape.concat(&[ks, es, roles])?;
            let pre = grn.se_gate_sent.forward(tape, inp)?;
            let gate = tape.sigmoid(pre)?;
            let msg = tape.mul(gate, es)?;
            tape.segment_sum(msg, &sent_idx, None, n_sent)?
        }
        _ => tape.zeros(n_sent, ds),
    };
    Ok(m_hat)
}

/// `κ_i^(l) = GRU([κ_i^(0); m_i; m̂_i; g^(l-1)], κ_i^(l-1))`
pub fn update_sentence(tape: &mut Tape<'_>, grn: &GrnParams, inputs: &GraphInputs, state: &GrnState, m: Var, m_hat: Var) -> Result<Var> {
    let (n_sent, _) = tape.dims(state.sentences);
    let g = tape.repeat_rows(state.global, n_sent)?;
    let xi = tape.concat(&[inputs.kappa0, m, m_hat, g])?;
    gru_cell(tape, xi, state.sentences, &grn.sent_gru)
}

/// Entity update from linked sentences, related entities, the entity's
/// word embedding and the global state.
pub fn update_entity(tape: &mut Tape<'_>, grn: &GrnParams, graph: &IrseGraph, inputs: &GraphInputs, state: &GrnState) -> Result<Option<Var>> {
    let (Some(ent), Some(emb)) = (state.entities, inputs.entity_emb) else {
        return Ok(None);
    };
    let (n_ent, de) = tape.dims(ent);

    let m = if graph.se_edges.is_empty() {
        tape.zeros(n_ent, de)
    } else {
        let sent_idx: Vec<usize> = graph.se_edges.iter().map(|e| e.sentence).collect();
        let ent_idx: Vec<usize> = graph.se_edges.iter().map(|e| e.entity).collect();
        let sent_e = grn.sent_to_ent.forward(tape, state.sentences)?;
        let ej = tape.gather(ent, &ent_idx)?;
        let si = tape.gather(sent_e, &sent_idx)?;
        let roles = role_matrix(tape, graph);
        let inp = tape.concat(&[ej, si, roles])?;
        let pre = grn.se_gate_ent.forward(tape, inp)?;
        let gate = tape.sigmoid(pre)?;
        let msg = tape.mul(gate, si)?;
        tape.segment_sum(msg, &ent_idx, None, n_ent)?
    };

    let m_hat = if graph.ee_edges.is_empty() {
        tape.zeros(n_ent, de)
    } else {
        let targets: Vec<usize> = graph.ee_edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        let sources: Vec<usize> = graph.ee_edges.iter().flat_map(|&(a, b)| [b, a]).collect();
        let et = tape.gather(ent, &targets)?;
        let es = tape.gather(ent, &sources)?;
        let inp = tape.concat(&[et, es])?;
        let pre = grn.ee_gate.forward(tape, inp)?;
        let gate = tape.sigmoid(pre)?;
        let msg = tape.mul(gate, es)?;
        tape.segment_sum(msg, &targets, None, n_ent)?
    };

    let gp = grn.glob_to_ent.forward(tape, state.global)?;
    let gp = tape.repeat_rows(gp, n_ent)?;
    let xi = tape.concat(&[emb, m, m_hat, gp])?;
    Ok(Some(gru_cell(tape, xi, ent, &grn.ent_gru)?))
}

/// `g^(l) = GRU([mean κ^(l-1); proj(mean ε^(l-1))], g^(l-1))`; a graph
/// without entities contributes a zero entity mean.
pub fn update_global(tape: &mut Tape<'_>, grn: &GrnParams, state: &GrnState) -> Result<Var> {
    let mk = tape.mean_rows(state.sentences)?;
    let me = match state.entities {
        Some(e) => tape.mean_rows(e)?,
        None => tape.zeros(1, grn.ent_to_sent.input),
    };
    let mp = grn.ent_to_sent.forward(tape, me)?;
    let inp = tape.concat(&[mk, mp])?;
    gru_cell(tape, inp, state.global, &grn.glob_gru)
}

/// One synchronous layer.
pub fn grn_layer(tape: &mut Tape<'_>, grn: &GrnParams, graph: &IrseGraph, inputs: &GraphInputs, state: &GrnState) -> Result<GrnState> {
    let (m, m_hat) = sentence_messages(tape, grn, graph, state)?;
    let sentences = update_sentence(tape, grn, inputs, state, m, m_hat)?;
    let entities = update_entity(tape, grn, graph, inputs, state)?;
    let global = update_global(tape, grn, state)?;
    Ok(GrnState {
        sentences,
        entities,
        global,
        layer: state.layer + 1,
    })
}

/// Encodes the graph and runs `layers` GRN layers.
pub fn grn_encode(tape: &mut Tape<'_>, net: &NetParams, vocab: &Vocab, graph: &IrseGraph, layers: usize) -> Result<Encoded> {
    let (inputs, mut state) = initial_state(tape, net, vocab, graph)?;
    for _ in 0..layers {
        state = grn_layer(tape, &net.grn, graph, &inputs, &state)?;
    }
    Ok(Encoded { inputs, state })
}
