//! Recorded computation with reverse-mode gradient accumulation.
//!
//! Every operation appends one node holding its output value. Nodes are
//! created in evaluation order, so walking them backwards visits each node
//! after all of its consumers, which is all reverse-mode accumulation needs.

use std::collections::HashMap;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Affine { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { x: Var, row: Var },
    ScaleShift { x: Var, scale: f64 },
    Sigmoid(Var),
    Tanh(Var),
    Softmax { x: Var },
    Log { x: Var, floor: f64 },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Gather { x: Var, idx: Vec<usize> },
    SegmentSum { x: Var, idx: Vec<usize>, weights: Option<Vec<f64>> },
    MulConst { x: Var, c: Vec<f64> },
    Repeat { x: Var },
    Reshape { x: Var },
    Sum(Var),
    Pick { x: Var, index: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
}

/// Element-wise activation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    /// Row-wise softmax along the last dimension.
    Softmax,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A single forward computation over a read-only parameter store.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
    clamped: usize,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            param_nodes: HashMap::new(),
            clamped: 0,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `log` evaluations whose input was clamped at the floor.
    pub fn clamp_count(&self) -> usize {
        self.clamped
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || rows * cols == value.len());
        self.nodes.push(Node { op, rows, cols, value });
        Var(self.nodes.len() - 1)
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        let (r, c) = self.dims(v);
        vec![r, c]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.tensor(id).values(),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let (r, c) = self.dims(v);
        Tensor::matrix(r, c, self.value(v).to_vec()).expect("node shape is consistent")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn row(&self, v: Var, r: usize) -> &[f64] {
        let (_, c) = self.dims(v);
        &self.value(v)[r * c..(r + 1) * c]
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            left: self.shape(a),
            right: self.shape(b),
        }
    }

    // ---- leaves -------------------------------------------------------

    pub fn constant(&mut self, t: &Tensor) -> Var {
        let (r, c) = t.dims();
        self.push(Op::Leaf, r, c, t.values().to_vec())
    }

    pub fn constant_values(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Var {
        assert_eq!(rows * cols, values.len(), "constant shape");
        self.push(Op::Leaf, rows, cols, values)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(Op::Leaf, rows, cols, vec![0.0; rows * cols])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes.get(&id) {
            return *v;
        }
        let (r, c) = self.params.tensor(id).dims();
        let v = self.push(Op::Param(id), r, c, Vec::new());
        self.param_nodes.insert(id, v);
        v
    }

    // ---- linear algebra -----------------------------------------------

    /// `x W + b`, with `b` broadcast over the rows of `x`.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (r, n) = self.dims(x);
        let (wn, m) = self.dims(w);
        if n != wn {
            return Err(self.shape_err("affine", x, w));
        }
        if let Some(b) = b {
            let (br, bc) = self.dims(b);
            if br != 1 || bc != m {
                return Err(self.shape_err("affine bias", w, b));
            }
        }
        let mut out = vec![0.0; r * m];
        {
            let xv = self.value(x);
            let wv = self.value(w);
            for i in 0..r {
                let orow = &mut out[i * m..(i + 1) * m];
                if let Some(b) = b {
                    orow.copy_from_slice(self.value(b));
                }
                for k in 0..n {
                    let a = xv[i * n + k];
                    if a == 0.0 {
                        continue;
                    }
                    let wrow = &wv[k * m..(k + 1) * m];
                    for (o, w) in orow.iter_mut().zip(wrow) {
                        *o += a * w;
                    }
                }
            }
        }
        Ok(self.push(Op::Affine { x, w, b }, r, m, out))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<(usize, usize, Vec<f64>)> {
        if self.dims(a) != self.dims(b) {
            return Err(self.shape_err(name, a, b));
        }
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok((r, c, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c, out) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), r, c, out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c, out) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), r, c, out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c, out) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), r, c, out))
    }

    /// Adds a `1 x m` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        if self.dims(row) != (1, c) {
            return Err(self.shape_err("add_row", x, row));
        }
        let rv = self.value(row).to_vec();
        let out = self
            .value(x)
            .chunks(c.max(1))
            .flat_map(|xr| xr.iter().zip(&rv).map(|(a, b)| a + b).collect::<Vec<_>>())
            .collect();
        Ok(self.push(Op::AddRow { x, row }, r, c, out))
    }

    /// `scale * x + shift`, element-wise.
    pub fn scale_shift(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let (r, c) = self.dims(x);
        let out = self.value(x).iter().map(|v| scale * v + shift).collect();
        self.push(Op::ScaleShift { x, scale }, r, c, out)
    }

    /// `1 - x`
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.scale_shift(x, -1.0, 1.0)
    }

    /// Element-wise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, x: Var, c: Vec<f64>) -> Result<Var> {
        let (r, cols) = self.dims(x);
        if c.len() != r * cols {
            return Err(Error::Shape {
                op: "mul_const",
                left: self.shape(x),
                right: vec![c.len()],
            });
        }
        let out = self.value(x).iter().zip(&c).map(|(a, b)| a * b).collect();
        Ok(self.push(Op::MulConst { x, c }, r, cols, out))
    }

    // ---- activations --------------------------------------------------

    fn check_finite(&self, x: Var, op: &'static str) -> Result<()> {
        if self.value(x).iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Result<Var> {
        match kind {
            Activation::Sigmoid => self.sigmoid(x),
            Activation::Tanh => self.tanh(x),
            Activation::Softmax => self.softmax(x),
        }
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check_finite(x, "sigmoid")?;
        let (r, c) = self.dims(x);
        let out = self.value(x).iter().map(|v| sigmoid(*v)).collect();
        Ok(self.push(Op::Sigmoid(x), r, c, out))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.check_finite(x, "tanh")?;
        let (r, c) = self.dims(x);
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        Ok(self.push(Op::Tanh(x), r, c, out))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (_, c) = self.dims(x);
        self.masked_softmax(x, &vec![false; c])
    }

    /// Row-wise softmax where columns flagged in `masked` get probability 0.
    pub fn masked_softmax(&mut self, x: Var, masked: &[bool]) -> Result<Var> {
        self.check_finite(x, "softmax")?;
        let (r, c) = self.dims(x);
        if masked.len() != c {
            return Err(Error::Shape {
                op: "masked_softmax",
                left: self.shape(x),
                right: vec![masked.len()],
            });
        }
        if c > 0 && masked.iter().all(|m| *m) {
            return Err(Error::State("softmax over an empty support".into()));
        }
        let mut out = vec![0.0; r * c];
        let xv = self.value(x);
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let max = row
                .iter()
                .zip(masked)
                .filter(|(_, m)| !**m)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let orow = &mut out[i * c..(i + 1) * c];
            let mut total = 0.0;
            for j in 0..c {
                if !masked[j] {
                    orow[j] = (row[j] - max).exp();
                    total += orow[j];
                }
            }
            orow.iter_mut().for_each(|v| *v /= total);
        }
        Ok(self.push(Op::Softmax { x }, r, c, out))
    }

    /// Natural log with inputs clamped below at `floor`; clamped entries pass
    /// no gradient and are counted in [`Tape::clamp_count`].
    pub fn log(&mut self, x: Var, floor: f64) -> Var {
        let (r, c) = self.dims(x);
        let mut clamped = 0;
        let out = self
            .value(x)
            .iter()
            .map(|v| {
                if *v < floor {
                    clamped += 1;
                    floor.ln()
                } else {
                    v.ln()
                }
            })
            .collect();
        self.clamped += clamped;
        self.push(Op::Log { x, floor }, r, c, out)
    }

    // ---- structure ----------------------------------------------------

    /// Column-wise concatenation of nodes with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.dims(parts[0]).0;
        for p in parts {
            if self.dims(*p).0 != rows {
                return Err(self.shape_err("concat", parts[0], *p));
            }
        }
        let cols: usize = parts.iter().map(|p| self.dims(*p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                out.extend_from_slice(self.row(*p, i));
            }
        }
        Ok(self.push(Op::Concat(parts.to_vec()), rows, cols, out))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if start + len > c {
            return Err(Error::Shape {
                op: "slice",
                left: self.shape(x),
                right: vec![start, len],
            });
        }
        let xv = self.value(x);
        let out = (0..r).flat_map(|i| xv[i * c + start..i * c + start + len].to_vec()).collect();
        Ok(self.push(Op::Slice { x, start }, r, len, out))
    }

    /// Rows of `x` selected by `idx` (repeats allowed).
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(x);
        if let Some(bad) = idx.iter().find(|i| **i >= r) {
            return Err(Error::Shape {
                op: "gather",
                left: self.shape(x),
                right: vec![*bad],
            });
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(idx.len() * c);
        for i in idx {
            out.extend_from_slice(&xv[i * c..(i + 1) * c]);
        }
        Ok(self.push(Op::Gather { x, idx: idx.to_vec() }, idx.len(), c, out))
    }

    /// `out[idx[k]] += weight[k] * x[k]` into a fresh `rows x cols` result.
    pub fn segment_sum(&mut self, x: Var, idx: &[usize], weights: Option<Vec<f64>>, rows: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if idx.len() != r || weights.as_ref().is_some_and(|w| w.len() != r) || idx.iter().any(|i| *i >= rows) {
            return Err(Error::Shape {
                op: "segment_sum",
                left: self.shape(x),
                right: vec![idx.len(), rows],
            });
        }
        let xv = self.value(x);
        let mut out = vec![0.0; rows * c];
        for (k, &t) in idx.iter().enumerate() {
            let wk = weights.as_ref().map_or(1.0, |w| w[k]);
            let dst = &mut out[t * c..(t + 1) * c];
            for (d, s) in dst.iter_mut().zip(&xv[k * c..(k + 1) * c]) {
                *d += wk * s;
            }
        }
        Ok(self.push(
            Op::SegmentSum {
                x,
                idx: idx.to_vec(),
                weights,
            },
            rows,
            c,
            out,
        ))
    }

    /// Mean over rows, as a `1 x cols` node.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (r, _) = self.dims(x);
        if r == 0 {
            return Err(Error::Shape {
                op: "mean_rows",
                left: self.shape(x),
                right: vec![],
            });
        }
        self.segment_sum(x, &vec![0; r], Some(vec![1.0 / r as f64; r]), 1)
    }

    /// Repeats a `1 x c` row `rows` times.
    pub fn repeat_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if r != 1 {
            return Err(Error::Shape {
                op: "repeat_rows",
                left: self.shape(x),
                right: vec![1, c],
            });
        }
        let out = self.value(x).repeat(rows);
        Ok(self.push(Op::Repeat { x }, rows, c, out))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if r * c != rows * cols {
            return Err(Error::Shape {
                op: "reshape",
                left: self.shape(x),
                right: vec![rows, cols],
            });
        }
        let out = self.value(x).to_vec();
        Ok(self.push(Op::Reshape { x }, rows, cols, out))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(Op::Sum(x), 1, 1, vec![s])
    }

    /// Sum of several `1 x 1` nodes (or equal-shape nodes).
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let mut acc = xs[0];
        for x in &xs[1..] {
            acc = self.add(acc, *x)?;
        }
        Ok(acc)
    }

    /// Flat element `index` as a `1 x 1` node.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let v = *self.value(x).get(index).ok_or_else(|| Error::Shape {
            op: "pick",
            left: self.shape(x),
            right: vec![index],
        })?;
        Ok(self.push(Op::Pick { x, index }, 1, 1, vec![v]))
    }

    // ---- reverse mode -------------------------------------------------

    /// Reverse-mode pass from a scalar `loss`, returning d loss / d param for
    /// every parameter reachable from it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let mut out = Gradients::new(self.params.len());
        self.backward_into(loss, &mut out)?;
        Ok(out)
    }

    /// Like [`Tape::backward`] but adds into an existing accumulator.
    pub fn backward_into(&self, loss: Var, out: &mut Gradients) -> Result<()> {
        if self.dims(loss) != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: self.shape(loss),
                right: vec![1, 1],
            });
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        grads[loss.0] = vec![1.0];
        for idx in (0..=loss.0).rev() {
            let g = std::mem::take(&mut grads[idx]);
            if g.is_empty() {
                continue;
            }
            self.backprop_node(idx, &g, &mut grads, out);
        }
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Vec<f64>], out: &mut Gradients) {
        let node = &self.nodes[idx];
        let (rows, cols) = (node.rows, node.cols);
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => out.add(*id, g),
            Op::Affine { x, w, b } => {
                let (_, n) = self.dims(*x);
                let m = cols;
                let xv = self.value(*x);
                let wv = self.value(*w);
                {
                    let dx = acc(grads, *x, rows * n);
                    for i in 0..rows {
                        let grow = &g[i * m..(i + 1) * m];
                        for k in 0..n {
                            let wrow = &wv[k * m..(k + 1) * m];
                            dx[i * n + k] += dot(wrow, grow);
                        }
                    }
                }
                {
                    let dw = acc(grads, *w, n * m);
                    for i in 0..rows {
                        let grow = &g[i * m..(i + 1) * m];
                        for k in 0..n {
                            let a = xv[i * n + k];
                            if a == 0.0 {
                                continue;
                            }
                            for (d, gv) in dw[k * m..(k + 1) * m].iter_mut().zip(grow) {
                                *d += a * gv;
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    let db = acc(grads, *b, m);
                    for i in 0..rows {
                        for (d, gv) in db.iter_mut().zip(&g[i * m..(i + 1) * m]) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, g.len()), g);
                add_into(acc(grads, *b, g.len()), g);
            }
            Op::Sub(a, b) => {
                add_into(acc(grads, *a, g.len()), g);
                acc(grads, *b, g.len()).iter_mut().zip(g).for_each(|(d, v)| *d -= v);
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(grads, *a, g.len())
                    .iter_mut()
                    .zip(g.iter().zip(bv))
                    .for_each(|(d, (gv, bv))| *d += gv * bv);
                acc(grads, *b, g.len())
                    .iter_mut()
                    .zip(g.iter().zip(av))
                    .for_each(|(d, (gv, av))| *d += gv * av);
            }
            Op::AddRow { x, row } => {
                add_into(acc(grads, *x, g.len()), g);
                let dr = acc(grads, *row, cols);
                for i in 0..rows {
                    add_into(dr, &g[i * cols..(i + 1) * cols]);
                }
            }
            Op::ScaleShift { x, scale } => {
                acc(grads, *x, g.len()).iter_mut().zip(g).for_each(|(d, v)| *d += scale * v);
            }
            Op::Sigmoid(x) => {
                acc(grads, *x, g.len())
                    .iter_mut()
                    .zip(g.iter().zip(y))
                    .for_each(|(d, (gv, s))| *d += gv * s * (1.0 - s));
            }
            Op::Tanh(x) => {
                acc(grads, *x, g.len())
                    .iter_mut()
                    .zip(g.iter().zip(y))
                    .for_each(|(d, (gv, t))| *d += gv * (1.0 - t * t));
            }
            Op::Softmax { x } => {
                let dx = acc(grads, *x, g.len());
                for i in 0..rows {
                    let yr = &y[i * cols..(i + 1) * cols];
                    let gr = &g[i * cols..(i + 1) * cols];
                    let inner = dot(yr, gr);
                    for j in 0..cols {
                        dx[i * cols + j] += yr[j] * (gr[j] - inner);
                    }
                }
            }
            Op::Log { x, floor } => {
                let xv = self.value(*x);
                acc(grads, *x, g.len())
                    .iter_mut()
                    .zip(g.iter().zip(xv))
                    .for_each(|(d, (gv, xv))| {
                        if *xv >= *floor {
                            *d += gv / xv;
                        }
                    });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (_, pc) = self.dims(*p);
                    let dp = acc(grads, *p, rows * pc);
                    for i in 0..rows {
                        add_into(
                            &mut dp[i * pc..(i + 1) * pc],
                            &g[i * cols + offset..i * cols + offset + pc],
                        );
                    }
                    offset += pc;
                }
            }
            Op::Slice { x, start } => {
                let (_, xc) = self.dims(*x);
                let dx = acc(grads, *x, rows * xc);
                for i in 0..rows {
                    add_into(
                        &mut dx[i * xc + start..i * xc + start + cols],
                        &g[i * cols..(i + 1) * cols],
                    );
                }
            }
            Op::Gather { x, idx } => {
                let (xr, _) = self.dims(*x);
                let dx = acc(grads, *x, xr * cols);
                for (k, &src) in idx.iter().enumerate() {
                    add_into(&mut dx[src * cols..(src + 1) * cols], &g[k * cols..(k + 1) * cols]);
                }
            }
            Op::SegmentSum { x, idx, weights } => {
                let (xr, _) = self.dims(*x);
                let dx = acc(grads, *x, xr * cols);
                for (k, &t) in idx.iter().enumerate() {
                    let wk = weights.as_ref().map_or(1.0, |w| w[k]);
                    for (d, gv) in dx[k * cols..(k + 1) * cols].iter_mut().zip(&g[t * cols..(t + 1) * cols]) {
                        *d += wk * gv;
                    }
                }
            }
            Op::MulConst { x, c } => {
                acc(grads, *x, g.len())
                    .iter_mut()
                    .zip(g.iter().zip(c))
                    .for_each(|(d, (gv, cv))| *d += gv * cv);
            }
            Op::Repeat { x } => {
                let dx = acc(grads, *x, cols);
                for i in 0..rows {
                    add_into(dx, &g[i * cols..(i + 1) * cols]);
                }
            }
            Op::Reshape { x } => add_into(acc(grads, *x, g.len()), g),
            Op::Sum(x) => {
                let n = self.value(*x).len();
                acc(grads, *x, n).iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Pick { x, index } => {
                let n = self.value(*x).len();
                acc(grads, *x, n)[*index] += g[0];
            }
        }
    }
}

fn acc(grads: &mut [Vec<f64>], v: Var, len: usize) -> &mut Vec<f64> {
    let slot = &mut grads[v.0];
    if slot.is_empty() {
        *slot = vec![0.0; len];
    }
    slot
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
