//! Losses, the Adadelta optimizer and the three-phase training pipeline.

use std::fmt;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::{decode, teacher_forced, DecodeMode};
use crate::diffkernel::{Gradients, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::eval::{kendall_tau, pairwise_counts, presentation_seed};
use crate::graph::{build_graph, invert_permutation, IrseGraph, PairSet, ParagraphRecord};
use crate::grn::grn_encode;
use crate::model::{Dropout, ModelParams, DECODER_PREFIX, INITIAL_CLS_PREFIX, INITIAL_PREFIX, ITERATIVE_CLS_PREFIX, ITERATIVE_PREFIX, ORDER_PREFIX};
use crate::refine::{initial_pass, pair_scores, refine_with_mode, RefineConfig, RefineMode, Refiner};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` inside logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_initial: usize,
    pub epochs_iterative: usize,
    pub epochs_order: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub l2: f64,
    /// Fraction of gold pairs corrupted in phase B.
    pub eta: f64,
    /// Range of the fraction of pairs reset to 0.5 as phase-B targets.
    pub reset_min: f64,
    pub reset_max: f64,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub patience: usize,
    /// Train only the classifier head in phase B and the decoder in phase C.
    pub freeze_encoders: bool,
    /// Refinement applied to the phase-C training and validation graphs.
    pub refine_mode: RefineMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_initial: 10,
            epochs_iterative: 10,
            epochs_order: 10,
            batch_size: 16,
            dropout: 0.5,
            l2: 1e-5,
            eta: 0.2,
            reset_min: 0.2,
            reset_max: 0.6,
            learning_rate: 1.0,
            rho: 0.95,
            epsilon: 1e-6,
            clip_norm: 5.0,
            patience: 3,
            freeze_encoders: false,
            refine_mode: RefineMode::Full,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64, hi_open: bool| {
            let ok = v >= 0.0 && if hi_open { v < 1.0 } else { v <= 1.0 };
            if ok {
                Ok(())
            } else {
                Err(Error::validation(name, "out of range"))
            }
        };
        unit("dropout", self.dropout, true)?;
        unit("eta", self.eta, false)?;
        unit("reset_min", self.reset_min, false)?;
        unit("reset_max", self.reset_max, false)?;
        unit("rho", self.rho, true)?;
        if self.reset_min > self.reset_max {
            return Err(Error::validation("reset_min", "must not exceed reset_max"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::validation("learning_rate", "learning rate and epsilon must be positive"));
        }
        if !(self.l2 >= 0.0) || !(self.clip_norm >= 0.0) {
            return Err(Error::validation("l2", "l2 and clip_norm must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Iterative,
    Order,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Initial, Phase::Iterative, Phase::Order];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Initial => "initial",
            Phase::Iterative => "iterative",
            Phase::Order => "order",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: Phase,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub wall_time: f64,
}

/// Validation summary after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub logs: Vec<EpochLog>,
    /// Pairwise accuracy after the initial pass only.
    pub val_pairwise_initial: f64,
    /// Pairwise accuracy after full refinement.
    pub val_pairwise_refined: f64,
    pub val_tau: f64,
}

/// Hooks for logging and checkpointing.
pub trait TrainObserver {
    fn epoch(&mut self, _log: &EpochLog) {}
    fn phase_done(&mut self, _phase: Phase, _model: &ModelParams) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// `-mean(y log p + (1-y) log(1-p))` over a `P x 1` column of probabilities.
pub fn loss_pairwise(tape: &mut Tape<'_>, probs: Var, labels: &[f64]) -> Result<Var> {
    let (n, _) = tape.dims(probs);
    if labels.len() != n || n == 0 {
        return Err(Error::validation("labels", "one label per probability required"));
    }
    let lp = tape.log(probs, PROB_FLOOR);
    let q = tape.one_minus(probs);
    let lq = tape.log(q, PROB_FLOOR);
    let a = tape.mul_const(lp, labels.to_vec())?;
    let b = tape.mul_const(lq, labels.iter().map(|y| 1.0 - y).collect())?;
    let s = tape.add(a, b)?;
    let s = tape.sum(s);
    Ok(tape.scale_shift(s, -1.0 / n as f64, 0.0))
}

/// Scalar binary cross-entropy with the same clamping as [`loss_pairwise`].
pub fn bce(p: f64, label: f64) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// `-Σ_t log P(gold_t)` over teacher-forced step distributions.
pub fn loss_pointer(tape: &mut Tape<'_>, dists: &[Var], gold: &[usize]) -> Result<Var> {
    if dists.len() != gold.len() {
        return Err(Error::validation("gold", "one gold index per step required"));
    }
    let mut terms = Vec::with_capacity(gold.len());
    for (d, &g) in dists.iter().zip(gold) {
        let p = tape.pick(*d, g)?;
        terms.push(tape.log(p, PROB_FLOOR));
    }
    let s = tape.add_all(&terms)?;
    Ok(tape.scale_shift(s, -1.0, 0.0))
}

/// Rescales the gradients of `ids` so their joint norm is at most `max`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, ids: &[ParamId], max: f64) -> f64 {
    let norm = ids
        .iter()
        .filter_map(|id| store.tensor(*id).grad())
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if max > 0.0 && norm > max {
        let s = max / norm;
        for id in ids {
            let t = &mut store.get_mut(*id).tensor;
            if t.grad().is_some() {
                t.grad_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    norm
}

/// One Adadelta update of `ids` using their accumulated gradients, then
/// clears those gradients.
pub fn adadelta_step(store: &mut ParamStore, ids: &[ParamId], cfg: &TrainConfig) {
    let (rho, eps, lr, l2) = (cfg.rho, cfg.epsilon, cfg.learning_rate, cfg.l2);
    for id in ids {
        let p = store.get_mut(*id);
        let grad = p.tensor.grad().map(|g| g.to_vec());
        let theta = p.tensor.values_mut();
        for j in 0..theta.len() {
            let g = grad.as_ref().map_or(0.0, |g| g[j]) + l2 * theta[j];
            let eg = rho * p.sq_grad_avg[j] + (1.0 - rho) * g * g;
            let delta = -((p.sq_update_avg[j] + eps).sqrt() / (eg + eps).sqrt()) * g;
            p.sq_grad_avg[j] = eg;
            p.sq_update_avg[j] = rho * p.sq_update_avg[j] + (1.0 - rho) * delta * delta;
            theta[j] += lr * delta;
        }
        p.tensor.zero_grad();
    }
}

/// Mixes seed parts into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

fn trainable(model: &ModelParams, phase: Phase, cfg: &TrainConfig) -> Vec<ParamId> {
    let prefixes: &[&str] = match (phase, cfg.freeze_encoders) {
        (Phase::Initial, _) => &[INITIAL_PREFIX, INITIAL_CLS_PREFIX],
        (Phase::Iterative, false) => &[ITERATIVE_PREFIX, ITERATIVE_CLS_PREFIX],
        (Phase::Iterative, true) => &[ITERATIVE_CLS_PREFIX],
        (Phase::Order, false) => &[ORDER_PREFIX, DECODER_PREFIX],
        (Phase::Order, true) => &[DECODER_PREFIX],
    };
    model.ids_with_prefixes(prefixes)
}

/// Both directions of every pair, labelled by gold precedence.
fn directed_targets(pairs: &[(usize, usize)], gold_positions: &[usize]) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut both = Vec::with_capacity(2 * pairs.len());
    let mut labels = Vec::with_capacity(2 * pairs.len());
    for &(i, k) in pairs {
        let y = if gold_positions[i] < gold_positions[k] { 1.0 } else { 0.0 };
        both.push((i, k));
        labels.push(y);
        both.push((k, i));
        labels.push(1.0 - y);
    }
    (both, labels)
}

/// Presented graph, targets and labels for one phase-A example.
fn phase_a_loss(tape: &mut Tape<'_>, model: &ModelParams, rec: &ParagraphRecord, seed: u64, dropout: &mut Dropout) -> Result<Option<Var>> {
    let (g, presented) = build_graph(rec, seed)?;
    let pairs: Vec<_> = g.pairs().collect();
    if pairs.is_empty() {
        return Ok(None);
    }
    let enc = grn_encode(tape, &model.initial_net, &model.vocab, &g, model.dims.grn_layers)?;
    let (both, labels) = directed_targets(&pairs, &presented);
    let p = pair_scores(tape, &model.initial_cls, enc.state.sentences, &both, Some(dropout))?;
    Ok(Some(loss_pairwise(tape, p, &labels)?))
}

/// Gold weights plus noise, with a random subset of pairs reset to 0.5;
/// the reset pairs are the targets.
pub fn phase_b_graph(rec: &ParagraphRecord, seed: u64, cfg: &TrainConfig) -> Result<(IrseGraph, Vec<usize>, Vec<(usize, usize)>)> {
    let (mut g, presented) = build_graph(rec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xB]));
    g.assign_gold_weights(&presented)?;
    g.inject_noise(cfg.eta, &mut rng);
    let pairs: Vec<_> = g.pairs().collect();
    if pairs.is_empty() {
        return Ok((g, presented, pairs));
    }
    let frac = rng.gen_range(cfg.reset_min..=cfg.reset_max);
    let count = ((frac * pairs.len() as f64).round() as usize).clamp(1, pairs.len());
    let mut chosen = rand::seq::index::sample(&mut rng, pairs.len(), count).into_vec();
    chosen.sort_unstable();
    let targets: Vec<_> = chosen.into_iter().map(|i| pairs[i]).collect();
    g.uncertain_reset(&targets.iter().copied().collect::<PairSet>())?;
    Ok((g, presented, targets))
}

fn phase_b_loss(tape: &mut Tape<'_>, model: &ModelParams, rec: &ParagraphRecord, seed: u64, cfg: &TrainConfig, dropout: &mut Dropout) -> Result<Option<Var>> {
    let (g, presented, targets) = phase_b_graph(rec, seed, cfg)?;
    if targets.is_empty() {
        return Ok(None);
    }
    let enc = grn_encode(tape, &model.iterative_net, &model.vocab, &g, model.dims.grn_layers)?;
    let (both, labels) = directed_targets(&targets, &presented);
    let p = pair_scores(tape, &model.iterative_cls, enc.state.sentences, &both, Some(dropout))?;
    Ok(Some(loss_pairwise(tape, p, &labels)?))
}

/// A refined graph with its gold reading order (presented indices).
#[derive(Debug, Clone)]
pub struct OrderExample {
    pub graph: IrseGraph,
    pub gold_order: Vec<usize>,
}

/// Builds and refines graphs for the ordering phase.
pub fn refined_examples(model: &ModelParams, records: &[ParagraphRecord], seed: u64, refine: &RefineConfig, mode: RefineMode) -> Result<Vec<OrderExample>> {
    let refiner = Refiner::from_model(model);
    records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let (mut g, presented) = build_graph(r, presentation_seed(seed, k))?;
            refine_with_mode(&mut g, &refiner, refine, mode)?;
            Ok(OrderExample {
                graph: g,
                gold_order: invert_permutation(&presented),
            })
        })
        .collect()
}

fn phase_c_loss(tape: &mut Tape<'_>, model: &ModelParams, ex: &OrderExample, dropout: &mut Dropout) -> Result<Var> {
    let enc = grn_encode(tape, &model.order_net, &model.vocab, &ex.graph, model.dims.grn_layers)?;
    let dists = teacher_forced(tape, &model.decoder, &enc, &ex.gold_order, Some(dropout))?;
    loss_pointer(tape, &dists, &ex.gold_order)
}

/// Pooled pairwise accuracy on `records` under `mode`.
pub fn pairwise_metric(model: &ModelParams, records: &[ParagraphRecord], seed: u64, refine: &RefineConfig, mode: RefineMode) -> Result<f64> {
    let refiner = Refiner::from_model(model);
    let mut tot = (0usize, 0usize);
    for (k, r) in records.iter().enumerate() {
        let (mut g, presented) = build_graph(r, presentation_seed(seed, k))?;
        refine_with_mode(&mut g, &refiner, refine, mode)?;
        let (c, t) = pairwise_counts(&g, &presented);
        tot.0 += c;
        tot.1 += t;
    }
    Ok(if tot.1 == 0 { 1.0 } else { tot.0 as f64 / tot.1 as f64 })
}

/// Fraction of pairs whose initial-classifier weight falls on the gold side
/// of 0.5.
fn sign_accuracy(model: &ModelParams, records: &[ParagraphRecord], seed: u64) -> Result<f64> {
    let refiner = Refiner::from_model(model);
    let cfg = RefineConfig {
        delta_min: 0.5,
        delta_max: 0.5,
        k_max: 1,
    };
    let mut tot = (0usize, 0usize);
    for (k, r) in records.iter().enumerate() {
        let (mut g, presented) = build_graph(r, presentation_seed(seed, k))?;
        initial_pass(&mut g, &refiner, &cfg)?;
        let (c, t) = pairwise_counts(&g, &presented);
        tot.0 += c;
        tot.1 += t;
    }
    Ok(if tot.1 == 0 { 1.0 } else { tot.0 as f64 / tot.1 as f64 })
}

/// Mean Kendall τ of greedy decoding on prepared examples.
pub fn tau_metric(model: &ModelParams, examples: &[OrderExample]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in examples {
        let mut tape = Tape::new(&model.store);
        let enc = grn_encode(&mut tape, &model.order_net, &model.vocab, &ex.graph, model.dims.grn_layers)?;
        let d = decode(&mut tape, &model.decoder, &enc, DecodeMode::Greedy, None)?;
        total += kendall_tau(&d.order, &ex.gold_order)?;
    }
    Ok(total / examples.len() as f64)
}

/// Generic epoch loop with early stopping. `loss_of(tape, index, epoch,
/// dropout)` builds one example's loss, or `None` when it has no targets.
#[allow(clippy::too_many_arguments)]
fn run_phase<L, V>(model: &mut ModelParams, phase: Phase, n_train: usize, epochs: usize, cfg: &TrainConfig, obs: &mut dyn TrainObserver, logs: &mut Vec<EpochLog>, mut loss_of: L, mut validate: V) -> Result<()>
where
    L: FnMut(&mut Tape<'_>, &ModelParams, usize, usize, &mut Dropout) -> Result<Option<Var>>,
    V: FnMut(&ModelParams) -> Result<f64>,
{
    let ids = trainable(model, phase, cfg);
    let phase_seed = derive_seed(&[cfg.seed, phase as u64]);
    let mut order_rng = ChaCha8Rng::seed_from_u64(phase_seed);
    let mut dropout = Dropout::new(cfg.dropout, derive_seed(&[phase_seed, 1]));
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut stale = 0;
    let start = Instant::now();
    for epoch in 0..epochs {
        let mut idx: Vec<usize> = (0..n_train).collect();
        idx.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        let mut clamped = 0usize;
        for (step, batch) in idx.chunks(cfg.batch_size).enumerate() {
            let mut grads = Gradients::new(model.store.len());
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut tape = Tape::new(&model.store);
                let loss = match loss_of(&mut tape, model, i, epoch, &mut dropout) {
                    Ok(Some(l)) => l,
                    Ok(None) => continue,
                    Err(Error::NonFinite { .. }) => return Err(non_finite(phase, epoch, step)),
                    Err(e) => return Err(e),
                };
                let v = tape.scalar(loss);
                if !v.is_finite() {
                    return Err(non_finite(phase, epoch, step));
                }
                clamped += tape.clamp_count();
                loss_sum += v;
                loss_n += 1;
                let scaled = tape.scale_shift(loss, scale, 0.0);
                tape.backward_into(scaled, &mut grads)?;
            }
            model.store.accumulate(&grads);
            clip_grad_norm(&mut model.store, &ids, cfg.clip_norm);
            adadelta_step(&mut model.store, &ids, cfg);
        }
        if clamped > 0 {
            debug!("{phase} epoch {epoch}: {clamped} probabilities clamped");
        }
        let val = validate(model)?;
        let log = EpochLog {
            phase,
            epoch,
            train_loss: if loss_n == 0 { 0.0 } else { loss_sum / loss_n as f64 },
            val_metric: val,
            wall_time: start.elapsed().as_secs_f64(),
        };
        info!("{phase} epoch {epoch}: loss {:.5} val {:.4}", log.train_loss, val);
        obs.epoch(&log);
        logs.push(log);
        if best.as_ref().is_none_or(|(b, _)| val > *b) {
            let snap = ids.iter().map(|id| model.store.tensor(*id).values().to_vec()).collect();
            best = Some((val, snap));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, snap)) = best {
        for (id, v) in ids.iter().zip(snap) {
            model.store.values_mut(*id).copy_from_slice(&v);
        }
    }
    Ok(())
}

fn non_finite(phase: Phase, epoch: usize, step: usize) -> Error {
    Error::NonFiniteLoss {
        phase: phase.name().into(),
        epoch,
        step,
    }
}

const VAL_STREAM: u64 = 0x5A1;

/// Runs phases `start..=Order`. Earlier phases are assumed done (their
/// parameters already in `model`).
pub fn train_pipeline(model: &mut ModelParams, train: &[ParagraphRecord], val: &[ParagraphRecord], cfg: &TrainConfig, refine: &RefineConfig, start: Phase, obs: &mut dyn TrainObserver) -> Result<TrainReport> {
    cfg.validate()?;
    refine.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    let val_seed = derive_seed(&[cfg.seed, VAL_STREAM]);
    let mut logs = Vec::new();

    if start <= Phase::Initial {
        run_phase(
            model,
            Phase::Initial,
            train.len(),
            cfg.epochs_initial,
            cfg,
            obs,
            &mut logs,
            |tape, m, i, epoch, d| phase_a_loss(tape, m, &train[i], derive_seed(&[cfg.seed, 0xA, epoch as u64, i as u64]), d),
            |m| sign_accuracy(m, val, val_seed),
        )?;
        obs.phase_done(Phase::Initial, model)?;
    }

    if start <= Phase::Iterative {
        model.store.copy_prefix(INITIAL_PREFIX, ITERATIVE_PREFIX)?;
        run_phase(
            model,
            Phase::Iterative,
            train.len(),
            cfg.epochs_iterative,
            cfg,
            obs,
            &mut logs,
            |tape, m, i, epoch, d| phase_b_loss(tape, m, &train[i], derive_seed(&[cfg.seed, 0xB, epoch as u64, i as u64]), cfg, d),
            |m| pairwise_metric(m, val, val_seed, refine, RefineMode::Full),
        )?;
        obs.phase_done(Phase::Iterative, model)?;
    }

    model.store.copy_prefix(INITIAL_PREFIX, ORDER_PREFIX)?;
    let train_seed = derive_seed(&[cfg.seed, 0xC]);
    let train_ex = refined_examples(model, train, train_seed, refine, cfg.refine_mode)?;
    let val_ex = refined_examples(model, val, val_seed, refine, cfg.refine_mode)?;
    run_phase(
        model,
        Phase::Order,
        train_ex.len(),
        cfg.epochs_order,
        cfg,
        obs,
        &mut logs,
        |tape, m, i, _, d| phase_c_loss(tape, m, &train_ex[i], d).map(Some),
        |m| tau_metric(m, &val_ex),
    )?;
    obs.phase_done(Phase::Order, model)?;

    Ok(TrainReport {
        logs,
        val_pairwise_initial: pairwise_metric(model, val, val_seed, refine, RefineMode::InitialOnly)?,
        val_pairwise_refined: pairwise_metric(model, val, val_seed, refine, RefineMode::Full)?,
        val_tau: tau_metric(model, &val_ex)?,
    })
}
