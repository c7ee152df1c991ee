//! Affine layers and the two recurrent cells, composed from tape primitives.
//!
//! All functions operate on row batches: `x` is `rows x input`, states are
//! `rows x hidden`, and every row is an independent cell instance.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// `x W + b` parameters.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, bias: bool, rng: &mut R) -> Result<Self> {
        let w = store.add_uniform(&format!("{name}.w"), vec![input, output], rng)?;
        let b = if bias {
            Some(store.add_uniform(&format!("{name}.b"), vec![1, output], rng)?)
        } else {
            None
        };
        Ok(Self { w, b, input, output })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = self.b.map(|b| tape.param(b));
        tape.affine(x, w, b)
    }
}

/// GRU weights. The update and reset gates share one fused matrix:
/// columns `0..h` are the update gate, `h..2h` the reset gate.
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w_zr: ParamId,
    pub u_zr: ParamId,
    pub b_zr: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruParams {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            w_zr: store.add_uniform(&format!("{name}.w_zr"), vec![input, 2 * hidden], rng)?,
            u_zr: store.add_uniform(&format!("{name}.u_zr"), vec![hidden, 2 * hidden], rng)?,
            b_zr: store.add_uniform(&format!("{name}.b_zr"), vec![1, 2 * hidden], rng)?,
            w_h: store.add_uniform(&format!("{name}.w_h"), vec![input, hidden], rng)?,
            u_h: store.add_uniform(&format!("{name}.u_h"), vec![hidden, hidden], rng)?,
            b_h: store.add_uniform(&format!("{name}.b_h"), vec![1, hidden], rng)?,
            input,
            hidden,
        })
    }
}

/// Standard GRU update:
/// `z = σ(x W_z + h U_z + b_z)`, `r = σ(x W_r + h U_r + b_r)`,
/// `ĥ = tanh(x W_h + (r ⊙ h) U_h + b_h)`, `h' = (1 - z) ⊙ h + z ⊙ ĥ`.
pub fn gru_cell(tape: &mut Tape<'_>, x: Var, h_prev: Var, p: &GruParams) -> Result<Var> {
    check_cols(tape, "gru_cell input", x, p.input)?;
    check_cols(tape, "gru_cell state", h_prev, p.hidden)?;
    let hd = p.hidden;
    let (w_zr, u_zr, b_zr) = (tape.param(p.w_zr), tape.param(p.u_zr), tape.param(p.b_zr));
    let xzr = tape.affine(x, w_zr, Some(b_zr))?;
    let hzr = tape.affine(h_prev, u_zr, None)?;
    let pre = tape.add(xzr, hzr)?;
    let gates = tape.sigmoid(pre)?;
    let z = tape.slice(gates, 0, hd)?;
    let r = tape.slice(gates, hd, hd)?;
    let rh = tape.mul(r, h_prev)?;
    let (w_h, u_h, b_h) = (tape.param(p.w_h), tape.param(p.u_h), tape.param(p.b_h));
    let xh = tape.affine(x, w_h, Some(b_h))?;
    let hh = tape.affine(rh, u_h, None)?;
    let cand_pre = tape.add(xh, hh)?;
    let cand = tape.tanh(cand_pre)?;
    // h + z ⊙ (ĥ - h)
    let diff = tape.sub(cand, h_prev)?;
    let step = tape.mul(z, diff)?;
    tape.add(h_prev, step)
}

/// LSTM weights with gates fused in the order input, forget, output,
/// candidate (`4 * hidden` columns).
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            w: store.add_uniform(&format!("{name}.w"), vec![input, 4 * hidden], rng)?,
            u: store.add_uniform(&format!("{name}.u"), vec![hidden, 4 * hidden], rng)?,
            b: store.add_uniform(&format!("{name}.b"), vec![1, 4 * hidden], rng)?,
            input,
            hidden,
        })
    }
}

/// One LSTM step: `c' = f ⊙ c + i ⊙ ĉ`, `h' = o ⊙ tanh(c')`.
pub fn lstm_step(tape: &mut Tape<'_>, x: Var, state: (Var, Var), p: &LstmParams) -> Result<(Var, Var)> {
    let (h, c) = state;
    check_cols(tape, "lstm_step input", x, p.input)?;
    check_cols(tape, "lstm_step state", h, p.hidden)?;
    check_cols(tape, "lstm_step cell", c, p.hidden)?;
    let hd = p.hidden;
    let (w, u, b) = (tape.param(p.w), tape.param(p.u), tape.param(p.b));
    let xw = tape.affine(x, w, Some(b))?;
    let hu = tape.affine(h, u, None)?;
    let pre = tape.add(xw, hu)?;
    let sig_pre = tape.slice(pre, 0, 3 * hd)?;
    let sig = tape.sigmoid(sig_pre)?;
    let i = tape.slice(sig, 0, hd)?;
    let f = tape.slice(sig, hd, hd)?;
    let o = tape.slice(sig, 2 * hd, hd)?;
    let cand_pre = tape.slice(pre, 3 * hd, hd)?;
    let cand = tape.tanh(cand_pre)?;
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, cand)?;
    let c_new = tape.add(keep, write)?;
    let c_act = tape.tanh(c_new)?;
    let h_new = tape.mul(o, c_act)?;
    Ok((h_new, c_new))
}

fn check_cols(tape: &Tape<'_>, op: &'static str, v: Var, expected: usize) -> Result<()> {
    let (r, c) = tape.dims(v);
    if c != expected {
        return Err(Error::Shape {
            op,
            left: vec![r, c],
            right: vec![r, expected],
        });
    }
    Ok(())
}
