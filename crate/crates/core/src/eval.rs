//! Ordering metrics, pairwise accuracy, exhaustive decoding oracle, and
//! per-paragraph prediction.

use serde::{Deserialize, Serialize};

use crate::decode::{decode, permutations, sequence_log_prob, DecodeMode};
use crate::diffkernel::Tape;
use crate::error::{Error, Result};
use crate::graph::{build_graph, invert_permutation, IrseGraph, ParagraphRecord};
use crate::grn::{grn_encode, Encoded};
use crate::model::{DecoderParams, ModelParams};
use crate::refine::{refine_with_mode, RefineConfig, RefineMode, RefineTrace, Refiner};

/// Largest paragraph the exhaustive oracle accepts.
pub const ORACLE_MAX_SENTENCES: usize = 7;

fn same_len(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::validation("pred", format!("length {} differs from gold length {}", a.len(), b.len())));
    }
    Ok(())
}

fn positions(order: &[usize]) -> Result<Vec<usize>> {
    if !crate::graph::is_permutation(order) {
        return Err(Error::validation("order", "not a permutation"));
    }
    Ok(invert_permutation(order))
}

/// `1 - 2 * inversions / C(I, 2)`; sequences shorter than 2 score 1.
pub fn kendall_tau(pred: &[usize], gold: &[usize]) -> Result<f64> {
    same_len(pred, gold)?;
    let n = pred.len();
    if n < 2 {
        return Ok(1.0);
    }
    let pp = positions(pred)?;
    let gp = positions(gold)?;
    let mut inversions = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            if (pp[a] < pp[b]) != (gp[a] < gp[b]) {
                inversions += 1;
            }
        }
    }
    let pairs = n * (n - 1) / 2;
    Ok(1.0 - 2.0 * inversions as f64 / pairs as f64)
}

/// Fraction of paragraphs predicted exactly.
pub fn pmr(preds: &[Vec<usize>], golds: &[Vec<usize>]) -> Result<f64> {
    if preds.len() != golds.len() {
        return Err(Error::validation("preds", "number of predictions differs from number of gold orders"));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let exact = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(exact as f64 / preds.len() as f64)
}

/// Fraction of positions holding the gold sentence.
pub fn accuracy(pred: &[usize], gold: &[usize]) -> Result<f64> {
    same_len(pred, gold)?;
    if pred.is_empty() {
        return Ok(1.0);
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Whether the first and last sentences are placed correctly.
pub fn head_tail(pred: &[usize], gold: &[usize]) -> Result<(bool, bool)> {
    same_len(pred, gold)?;
    if pred.is_empty() {
        return Ok((true, true));
    }
    Ok((pred[0] == gold[0], pred[pred.len() - 1] == gold[gold.len() - 1]))
}

/// `(correct, total)` over linked pairs. A pair is correct when its weight
/// is strictly on the gold side of 0.5.
pub fn pairwise_counts(g: &IrseGraph, gold_positions: &[usize]) -> (usize, usize) {
    let mut correct = 0;
    let mut total = 0;
    for (i, k, w) in g.weight_table() {
        total += 1;
        let before = gold_positions[i] < gold_positions[k];
        if (before && w > 0.5) || (!before && w < 0.5) {
            correct += 1;
        }
    }
    (correct, total)
}

/// Pairwise accuracy of one graph; a graph without pairs scores 1.
pub fn pairwise_accuracy(g: &IrseGraph, gold_positions: &[usize]) -> f64 {
    let (c, t) = pairwise_counts(g, gold_positions);
    if t == 0 {
        1.0
    } else {
        c as f64 / t as f64
    }
}

/// Exhaustive best order by summed log-probability under teacher forcing;
/// ties go to the lexicographically smallest permutation.
pub fn oracle_best_order(tape: &mut Tape<'_>, p: &DecoderParams, enc: &Encoded) -> Result<Vec<usize>> {
    let (n, _) = tape.dims(enc.state.sentences);
    if n > ORACLE_MAX_SENTENCES {
        return Err(Error::Size(format!("oracle enumerates at most {ORACLE_MAX_SENTENCES} sentences, got {n}")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(n) {
        let lp = sequence_log_prob(tape, p, enc, &perm)?;
        if best.as_ref().is_none_or(|(b, _)| lp > *b) {
            best = Some((lp, perm));
        }
    }
    Ok(best.expect("at least one permutation").1)
}

/// Aggregate report over a set of paragraphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub tau: f64,
    pub pmr: f64,
    pub acc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise_acc: Option<f64>,
    pub n_paragraphs: usize,
}

/// Output for one paragraph. Orders list presented sentence indices in
/// reading order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted_order: Vec<usize>,
    pub gold_order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_probabilities: Option<Vec<Vec<f64>>>,
    /// Correct and total linked pairs after refinement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise: Option<(usize, usize)>,
}

/// Averages per-paragraph metrics. Pairwise accuracy is pooled over all
/// pairs of all paragraphs that report it.
pub fn summarize(preds: &[Prediction], with_head_tail: bool) -> Result<MetricReport> {
    let n = preds.len();
    let mut tau = 0.0;
    let mut acc = 0.0;
    let mut heads = 0usize;
    let mut tails = 0usize;
    let mut pw = (0usize, 0usize);
    let mut any_pw = false;
    for p in preds {
        tau += kendall_tau(&p.predicted_order, &p.gold_order)?;
        acc += accuracy(&p.predicted_order, &p.gold_order)?;
        let (h, t) = head_tail(&p.predicted_order, &p.gold_order)?;
        heads += h as usize;
        tails += t as usize;
        if let Some((c, t)) = p.pairwise {
            any_pw = true;
            pw.0 += c;
            pw.1 += t;
        }
    }
    let orders: Vec<Vec<usize>> = preds.iter().map(|p| p.predicted_order.clone()).collect();
    let golds: Vec<Vec<usize>> = preds.iter().map(|p| p.gold_order.clone()).collect();
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    let ratio = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(MetricReport {
        tau: mean(tau),
        pmr: pmr(&orders, &golds)?,
        acc: mean(acc),
        head_acc: with_head_tail.then(|| ratio(heads)),
        tail_acc: with_head_tail.then(|| ratio(tails)),
        pairwise_acc: (any_pw && pw.1 > 0).then(|| pw.0 as f64 / pw.1 as f64),
        n_paragraphs: n,
    })
}

/// Inference settings shared by `eval` and `predict`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub refine: RefineConfig,
    pub mode: RefineMode,
    /// 1 means greedy decoding.
    pub beam_width: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            refine: RefineConfig::default(),
            mode: RefineMode::Full,
            beam_width: 1,
        }
    }
}

impl InferenceConfig {
    pub fn decode_mode(&self) -> DecodeMode {
        if self.beam_width <= 1 {
            DecodeMode::Greedy
        } else {
            DecodeMode::Beam { width: self.beam_width }
        }
    }
}

/// Anything that orders a presented paragraph.
pub trait OrderPredictor {
    fn predict(&self, record: &ParagraphRecord, presentation_seed: u64) -> Result<Prediction>;
}

/// Reads the gold order back; a perfect reference predictor.
pub struct GoldEcho;

impl OrderPredictor for GoldEcho {
    fn predict(&self, record: &ParagraphRecord, presentation_seed: u64) -> Result<Prediction> {
        let (g, presented) = build_graph(record, presentation_seed)?;
        let gold_order = invert_permutation(&presented);
        let mut g = g;
        g.assign_gold_weights(&presented)?;
        Ok(Prediction {
            id: record.id.clone(),
            predicted_order: gold_order.clone(),
            gold_order,
            step_probabilities: None,
            pairwise: Some(pairwise_counts(&g, &presented)),
        })
    }
}

/// Refines the graph with the model's classifiers, then decodes with the
/// ordering network.
pub struct ModelPredictor<'a> {
    pub model: &'a ModelParams,
    pub config: InferenceConfig,
    pub keep_steps: bool,
}

impl ModelPredictor<'_> {
    /// Refines and decodes an already built graph.
    pub fn predict_graph(&self, id: &str, mut g: IrseGraph, presented: &[usize]) -> Result<(Prediction, RefineTrace)> {
        let refiner = Refiner::from_model(self.model);
        let trace = refine_with_mode(&mut g, &refiner, &self.config.refine, self.config.mode)?;
        let pairwise = pairwise_counts(&g, presented);
        let d = decode_graph(self.model, &g, self.config.decode_mode())?;
        Ok((
            Prediction {
                id: id.to_string(),
                predicted_order: d.order,
                gold_order: invert_permutation(presented),
                step_probabilities: self.keep_steps.then_some(d.distributions),
                pairwise: Some(pairwise),
            },
            trace,
        ))
    }
}

/// Decodes a refined graph with the ordering network.
pub fn decode_graph(model: &ModelParams, g: &IrseGraph, mode: DecodeMode) -> Result<crate::decode::Decoded> {
    let mut tape = Tape::new(&model.store);
    let enc = grn_encode(&mut tape, &model.order_net, &model.vocab, g, model.dims.grn_layers)?;
    decode(&mut tape, &model.decoder, &enc, mode, None)
}

impl OrderPredictor for ModelPredictor<'_> {
    fn predict(&self, record: &ParagraphRecord, presentation_seed: u64) -> Result<Prediction> {
        let (g, presented) = build_graph(record, presentation_seed)?;
        Ok(self.predict_graph(&record.id, g, &presented)?.0)
    }
}

/// Sequentially predicts every record; record `k` is presented with
/// `presentation_seed(seed, k)`.
pub fn evaluate<P: OrderPredictor + ?Sized>(predictor: &P, records: &[ParagraphRecord], seed: u64, with_head_tail: bool) -> Result<MetricReport> {
    let preds = records
        .iter()
        .enumerate()
        .map(|(k, r)| predictor.predict(r, presentation_seed(seed, k)))
        .collect::<Result<Vec<_>>>()?;
    summarize(&preds, with_head_tail)
}

/// Seed used to shuffle the `index`-th paragraph of a split.
pub fn presentation_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}
