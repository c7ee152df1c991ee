//! Pairwise precedence classifiers and the iterative graph refinement loop.

use serde::{Deserialize, Serialize};

use crate::diffkernel::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{IrseGraph, PairSet};
use crate::grn::grn_encode;
use crate::model::{maybe_dropout, ClassifierParams, Dropout, ModelParams, NetParams, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub delta_min: f64,
    pub delta_max: f64,
    pub k_max: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            delta_min: 0.2,
            delta_max: 0.8,
            k_max: 10,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_min > 0.0 && self.delta_min <= 0.5) {
            return Err(Error::validation("delta_min", "must lie in (0, 0.5]"));
        }
        if !(self.delta_max >= 0.5 && self.delta_max < 1.0) {
            return Err(Error::validation("delta_max", "must lie in [0.5, 1)"));
        }
        if self.k_max == 0 {
            return Err(Error::validation("k_max", "must be at least 1"));
        }
        Ok(())
    }

    pub fn is_uncertain(&self, w: f64) -> bool {
        self.delta_min <= w && w <= self.delta_max
    }
}

/// How far refinement runs before ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    /// Initial pass followed by iterative passes.
    #[default]
    Full,
    /// Initial pass only.
    InitialOnly,
    /// No refinement: every weight stays 0.5.
    Frozen,
}

/// Batched classifier probabilities for ordered pairs `(a, b)`, as a `P x 1`
/// column. Row `p` is the belief that `a` precedes `b`.
pub fn pair_scores(tape: &mut Tape<'_>, cls: &ClassifierParams, sentences: Var, pairs: &[(usize, usize)], dropout: Option<&mut Dropout>) -> Result<Var> {
    let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let ka = tape.gather(sentences, &a)?;
    let kb = tape.gather(sentences, &b)?;
    let x = tape.concat(&[ka, kb])?;
    let h = cls.hidden.forward(tape, x)?;
    let h = tape.tanh(h)?;
    let h = maybe_dropout(tape, h, dropout)?;
    let o = cls.out.forward(tape, h)?;
    tape.sigmoid(o)
}

/// Probability that the sentence with state `a` precedes the one with state `b`.
pub fn pair_score(tape: &mut Tape<'_>, a: Var, b: Var, cls: &ClassifierParams) -> Result<Var> {
    let x = tape.concat(&[a, b])?;
    let h = cls.hidden.forward(tape, x)?;
    let h = tape.tanh(h)?;
    let o = cls.out.forward(tape, h)?;
    tape.sigmoid(o)
}

pub fn normalize_pair(p_fwd: f64, p_bwd: f64) -> (f64, f64) {
    let s = p_fwd + p_bwd;
    if s < 1e-12 {
        return (0.5, 0.5);
    }
    let w = p_fwd / s;
    (w, 1.0 - w)
}

/// One encoder and classifier used by a refinement pass.
#[derive(Clone, Copy)]
pub struct Stage<'a> {
    pub net: &'a NetParams,
    pub cls: &'a ClassifierParams,
}

/// Read-only parameters for refinement.
#[derive(Clone, Copy)]
pub struct Refiner<'a> {
    pub store: &'a ParamStore,
    pub vocab: &'a Vocab,
    pub layers: usize,
    pub initial: Stage<'a>,
    pub iterative: Stage<'a>,
}

impl<'a> Refiner<'a> {
    pub fn from_model(m: &'a ModelParams) -> Self {
        Self {
            store: &m.store,
            vocab: &m.vocab,
            layers: m.dims.grn_layers,
            initial: Stage {
                net: &m.initial_net,
                cls: &m.initial_cls,
            },
            iterative: Stage {
                net: &m.iterative_net,
                cls: &m.iterative_cls,
            },
        }
    }
}

/// Scores `pairs` (each `i < k`) in both directions and returns the
/// normalized `w(i,k)` for each.
fn score_pairs(refiner: &Refiner<'_>, stage: Stage<'_>, g: &IrseGraph, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let mut tape = Tape::new(refiner.store);
    let enc = grn_encode(&mut tape, stage.net, refiner.vocab, g, refiner.layers)?;
    let both: Vec<(usize, usize)> = pairs.iter().copied().chain(pairs.iter().map(|&(i, k)| (k, i))).collect();
    let probs = pair_scores(&mut tape, stage.cls, enc.state.sentences, &both, None)?;
    let p = tape.value(probs);
    let n = pairs.len();
    Ok((0..n).map(|t| normalize_pair(p[t], p[n + t]).0).collect())
}

/// Writes normalized weights; uncertain pairs are reset to 0.5 and returned.
fn commit(g: &mut IrseGraph, cfg: &RefineConfig, pairs: &[(usize, usize)], weights: &[f64]) -> Result<PairSet> {
    let mut vp = PairSet::new();
    for (&(i, k), &w) in pairs.iter().zip(weights) {
        if cfg.is_uncertain(w) {
            g.set_pair_weight(i, k, 0.5)?;
            vp.insert((i, k));
        } else {
            g.set_pair_weight(i, k, w)?;
        }
    }
    Ok(vp)
}

/// Scores every linked pair once on the unweighted graph; returns `VP^(0)`.
pub fn initial_pass(g: &mut IrseGraph, refiner: &Refiner<'_>, cfg: &RefineConfig) -> Result<PairSet> {
    if !g.all_weights_neutral() {
        return Err(Error::State("initial pass requires all ss-weights at 0.5".into()));
    }
    let pairs: Vec<(usize, usize)> = g.pairs().collect();
    if pairs.is_empty() {
        return Ok(PairSet::new());
    }
    let w = score_pairs(refiner, refiner.initial, g, &pairs)?;
    commit(g, cfg, &pairs, &w)
}

/// Re-encodes the graph and re-scores only the pairs in `vp`.
pub fn iterative_pass(g: &mut IrseGraph, vp: &PairSet, refiner: &Refiner<'_>, cfg: &RefineConfig) -> Result<PairSet> {
    if let Some(&(i, k)) = vp.iter().find(|(i, k)| !g.has_edge(*i, *k)) {
        return Err(Error::NoEdge(i, k));
    }
    if vp.is_empty() {
        return Ok(PairSet::new());
    }
    let pairs: Vec<(usize, usize)> = vp.iter().copied().collect();
    let w = score_pairs(refiner, refiner.iterative, g, &pairs)?;
    commit(g, cfg, &pairs, &w)
}

/// Uncertain sets observed during one refinement run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineTrace {
    pub initial_vp: PairSet,
    /// Set returned by each iterative pass, in order.
    pub trajectory: Vec<PairSet>,
    pub iterations: usize,
    pub final_vp: PairSet,
}

/// Runs the refinement loop in place, calling `observe` after the initial
/// pass and after every iterative pass.
pub fn construct_irse_graph_observed<F>(g: &mut IrseGraph, refiner: &Refiner<'_>, cfg: &RefineConfig, mut observe: F) -> Result<RefineTrace>
where
    F: FnMut(&IrseGraph, &PairSet),
{
    let initial_vp = initial_pass(g, refiner, cfg)?;
    observe(g, &initial_vp);
    let mut vp = initial_vp.clone();
    let mut trajectory = Vec::new();
    while !vp.is_empty() && trajectory.len() < cfg.k_max {
        let next = iterative_pass(g, &vp, refiner, cfg)?;
        observe(g, &next);
        trajectory.push(next.clone());
        let stable = next == vp;
        vp = next;
        if stable {
            break;
        }
    }
    Ok(RefineTrace {
        initial_vp,
        iterations: trajectory.len(),
        trajectory,
        final_vp: vp,
    })
}

pub fn construct_irse_graph(g: &mut IrseGraph, refiner: &Refiner<'_>, cfg: &RefineConfig) -> Result<RefineTrace> {
    construct_irse_graph_observed(g, refiner, cfg, |_, _| {})
}

/// Applies `mode` to a fresh graph.
pub fn refine_with_mode(g: &mut IrseGraph, refiner: &Refiner<'_>, cfg: &RefineConfig, mode: RefineMode) -> Result<RefineTrace> {
    match mode {
        RefineMode::Full => construct_irse_graph(g, refiner, cfg),
        RefineMode::InitialOnly => {
            let vp = initial_pass(g, refiner, cfg)?;
            Ok(RefineTrace {
                initial_vp: vp.clone(),
                trajectory: Vec::new(),
                iterations: 0,
                final_vp: vp,
            })
        }
        RefineMode::Frozen => {
            g.reset_all_weights();
            let all = g.all_pairs();
            Ok(RefineTrace {
                initial_vp: all.clone(),
                trajectory: Vec::new(),
                iterations: 0,
                final_vp: all,
            })
        }
    }
}
