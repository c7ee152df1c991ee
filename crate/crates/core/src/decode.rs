//! Pointer-network decoder: attends over unvisited sentence states and emits
//! one presented sentence index per step.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::diffkernel::{lstm_step, Tape, Var};
use crate::error::{Error, Result};
use crate::grn::Encoded;
use crate::model::{maybe_dropout, DecoderParams, Dropout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DecodeMode {
    Greedy,
    Beam { width: usize },
}

/// Decoded order with the distribution recorded at each step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decoded {
    /// Presented sentence indices in predicted reading order.
    pub order: Vec<usize>,
    pub distributions: Vec<Vec<f64>>,
    /// Summed natural-log probability of the selections.
    pub log_prob: f64,
}

/// Per-paragraph values reused by every step.
#[derive(Debug, Clone, Copy)]
pub struct PointerContext {
    pub n: usize,
    kappa0: Var,
    keys_u: Var,
    start: Var,
    h0: Var,
    c0: Var,
}

impl PointerContext {
    pub fn new(tape: &mut Tape<'_>, p: &DecoderParams, enc: &Encoded) -> Result<Self> {
        let (n, _) = tape.dims(enc.state.sentences);
        let u = tape.param(p.att_u);
        let keys_u = tape.affine(enc.state.sentences, u, None)?;
        let start = tape.param(p.start);
        let h0 = p.init.forward(tape, enc.state.global)?;
        let h0 = tape.tanh(h0)?;
        let c0 = tape.zeros(1, p.lstm.hidden);
        Ok(Self {
            n,
            kappa0: enc.inputs.kappa0,
            keys_u,
            start,
            h0,
            c0,
        })
    }

    fn input(&self, tape: &mut Tape<'_>, prev: Option<usize>) -> Result<Var> {
        match prev {
            None => Ok(self.start),
            Some(i) => tape.gather(self.kappa0, &[i]),
        }
    }
}

/// `softmax(qᵀ tanh(W h + U K))` over unvisited sentences, as a `1 x I` row.
pub fn pointer_step(tape: &mut Tape<'_>, p: &DecoderParams, ctx: &PointerContext, h: Var, visited: &[bool]) -> Result<Var> {
    if visited.len() != ctx.n {
        return Err(Error::validation("visited", "mask length differs from sentence count"));
    }
    if visited.iter().all(|v| *v) {
        return Err(Error::State("pointer step with every sentence visited".into()));
    }
    let w = tape.param(p.att_w);
    let q = tape.param(p.att_q);
    let hw = tape.affine(h, w, None)?;
    let s = tape.add_row(ctx.keys_u, hw)?;
    let s = tape.tanh(s)?;
    let e = tape.affine(s, q, None)?;
    let e = tape.reshape(e, 1, ctx.n)?;
    tape.masked_softmax(e, visited)
}

/// One decoder step: feeds the previous pick (or the start vector) and
/// returns the distribution plus the new LSTM state.
fn advance(
    tape: &mut Tape<'_>,
    p: &DecoderParams,
    ctx: &PointerContext,
    prev: Option<usize>,
    state: (Var, Var),
    visited: &[bool],
    dropout: Option<&mut Dropout>,
) -> Result<(Var, (Var, Var))> {
    let x = ctx.input(tape, prev)?;
    let x = maybe_dropout(tape, x, dropout)?;
    let state = lstm_step(tape, x, state, &p.lstm)?;
    let dist = pointer_step(tape, p, ctx, state.0, visited)?;
    Ok((dist, state))
}

/// Step distributions under teacher forcing of `order`; these carry
/// gradients for the pointer loss.
pub fn teacher_forced(tape: &mut Tape<'_>, p: &DecoderParams, enc: &Encoded, order: &[usize], mut dropout: Option<&mut Dropout>) -> Result<Vec<Var>> {
    let ctx = PointerContext::new(tape, p, enc)?;
    check_order(order, ctx.n)?;
    let mut visited = vec![false; ctx.n];
    let mut state = (ctx.h0, ctx.c0);
    let mut prev = None;
    let mut out = Vec::with_capacity(ctx.n);
    for &pick in order {
        let (dist, s) = advance(tape, p, &ctx, prev, state, &visited, dropout.as_deref_mut())?;
        out.push(dist);
        state = s;
        visited[pick] = true;
        prev = Some(pick);
    }
    Ok(out)
}

/// Summed log-probability of `order`.
pub fn sequence_log_prob(tape: &mut Tape<'_>, p: &DecoderParams, enc: &Encoded, order: &[usize]) -> Result<f64> {
    let dists = teacher_forced(tape, p, enc, order, None)?;
    Ok(dists.iter().zip(order).map(|(d, &i)| tape.value(*d)[i].ln()).sum())
}

fn check_order(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n || !crate::graph::is_permutation(order) {
        return Err(Error::validation("order", "must be a permutation of the sentence indices"));
    }
    Ok(())
}

/// Decodes an order. With `teacher`, selections follow it and the recorded
/// distributions are those seen along the gold path.
pub fn decode(tape: &mut Tape<'_>, p: &DecoderParams, enc: &Encoded, mode: DecodeMode, teacher: Option<&[usize]>) -> Result<Decoded> {
    if let DecodeMode::Beam { width } = mode {
        if width == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
    }
    if let Some(gold) = teacher {
        let dists = teacher_forced(tape, p, enc, gold, None)?;
        return Ok(collect(tape, gold.to_vec(), &dists));
    }
    match mode {
        DecodeMode::Greedy => greedy(tape, p, enc),
        DecodeMode::Beam { width } => beam(tape, p, enc, width),
    }
}

fn collect(tape: &Tape<'_>, order: Vec<usize>, dists: &[Var]) -> Decoded {
    let distributions: Vec<Vec<f64>> = dists.iter().map(|d| tape.value(*d).to_vec()).collect();
    let log_prob = distributions.iter().zip(&order).map(|(d, &i)| d[i].ln()).sum();
    Decoded {
        order,
        distributions,
        log_prob,
    }
}

/// Index of the largest probability; ties go to the lowest index.
fn argmax(d: &[f64], visited: &[bool]) -> usize {
    let mut best = None;
    for (i, &v) in d.iter().enumerate() {
        if visited[i] {
            continue;
        }
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.expect("at least one unvisited").0
}

fn greedy(tape: &mut Tape<'_>, p: &DecoderParams, enc: &Encoded) -> Result<Decoded> {
    let ctx = PointerContext::new(tape, p, enc)?;
    let mut visited = vec![false; ctx.n];
    let mut state = (ctx.h0, ctx.c0);
    let mut prev = None;
    let mut order = Vec::with_capacity(ctx.n);
    let mut dists = Vec::with_capacity(ctx.n);
    for _ in 0..ctx.n {
        let (dist, s) = advance(tape, p, &ctx, prev, state, &visited, None)?;
        let pick = argmax(tape.value(dist), &visited);
        dists.push(dist);
        state = s;
        visited[pick] = true;
        order.push(pick);
        prev = Some(pick);
    }
    Ok(collect(tape, order, &dists))
}

struct Hyp {
    order: Vec<usize>,
    visited: Vec<bool>,
    state: (Var, Var),
    dists: Vec<Var>,
    log_prob: f64,
}

/// Higher score first; equal scores go to the lexicographically smaller order.
fn rank(a_lp: f64, a: &[usize], b_lp: f64, b: &[usize]) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a.cmp(b))
}

fn beam(tape: &mut Tape<'_>, p: &DecoderParams, enc: &Encoded, width: usize) -> Result<Decoded> {
    let ctx = PointerContext::new(tape, p, enc)?;
    let mut hyps = vec![Hyp {
        order: Vec::new(),
        visited: vec![false; ctx.n],
        state: (ctx.h0, ctx.c0),
        dists: Vec::new(),
        log_prob: 0.0,
    }];
    for _ in 0..ctx.n {
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        let mut stepped = Vec::with_capacity(hyps.len());
        for (h_idx, h) in hyps.iter().enumerate() {
            let (dist, s) = advance(tape, p, &ctx, h.order.last().copied(), h.state, &h.visited, None)?;
            for (j, &pj) in tape.value(dist).iter().enumerate() {
                if !h.visited[j] {
                    cands.push((h_idx, j, h.log_prob + pj.ln()));
                }
            }
            stepped.push((dist, s));
        }
        let key = |&(h_idx, j, _): &(usize, usize, f64)| {
            let mut o = hyps[h_idx].order.clone();
            o.push(j);
            o
        };
        cands.sort_by(|a, b| rank(a.2, &key(a), b.2, &key(b)));
        cands.truncate(width);
        hyps = cands
            .into_iter()
            .map(|(h_idx, j, lp)| {
                let parent = &hyps[h_idx];
                let mut order = parent.order.clone();
                order.push(j);
                let mut visited = parent.visited.clone();
                visited[j] = true;
                let mut dists = parent.dists.clone();
                dists.push(stepped[h_idx].0);
                Hyp {
                    order,
                    visited,
                    state: stepped[h_idx].1,
                    dists,
                    log_prob: lp,
                }
            })
            .collect();
    }
    let best = hyps.into_iter().next().expect("beam keeps at least one hypothesis");
    let mut out = collect(tape, best.order, &best.dists);
    out.log_prob = best.log_prob;
    Ok(out)
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}
