use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor plus its Adadelta accumulators.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    /// Running average of squared gradients.
    pub sq_grad_avg: Vec<f64>,
    /// Running average of squared updates.
    pub sq_update_avg: Vec<f64>,
}

/// Named collection of parameters. Names are unique.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

pub const INIT_SCALE: f64 = 0.08;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::validation("name", format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.params.len());
        let n = tensor.len();
        self.params.push(Parameter {
            name: name.to_string(),
            tensor,
            sq_grad_avg: vec![0.0; n],
            sq_update_avg: vec![0.0; n],
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Registers a parameter drawn uniformly from `[-INIT_SCALE, INIT_SCALE]`.
    pub fn add_uniform<R: Rng>(&mut self, name: &str, shape: Vec<usize>, rng: &mut R) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-INIT_SCALE..=INIT_SCALE)).collect();
        self.add(name, Tensor::new(shape, values)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    /// Ids of every parameter whose name starts with `prefix`.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.params
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.name.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.params[id.0].tensor.values_mut()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Adds a batch of gradients into the parameters' grad slots.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (i, g) in grads.slots.iter().enumerate() {
            if let Some(g) = g {
                self.params[i].tensor.accumulate_grad(g);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.tensor.zero_grad();
        }
    }

    /// Copies values of every parameter named `from_prefix*` onto the
    /// matching `to_prefix*` parameter.
    pub fn copy_prefix(&mut self, from_prefix: &str, to_prefix: &str) -> Result<()> {
        let pairs: Vec<(usize, ParamId)> = self
            .params
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                p.name
                    .strip_prefix(from_prefix)
                    .map(|rest| (i, format!("{to_prefix}{rest}")))
            })
            .map(|(i, target)| {
                self.id(&target)
                    .map(|t| (i, t))
                    .ok_or_else(|| Error::Checkpoint(format!("no parameter `{target}` to copy into")))
            })
            .collect::<Result<_>>()?;
        for (src, dst) in pairs {
            if self.params[src].tensor.shape() != self.params[dst.0].tensor.shape() {
                return Err(Error::Shape {
                    op: "copy_prefix",
                    left: self.params[src].tensor.shape().to_vec(),
                    right: self.params[dst.0].tensor.shape().to_vec(),
                });
            }
            let values = self.params[src].tensor.values().to_vec();
            self.params[dst.0].tensor.values_mut().copy_from_slice(&values);
        }
        Ok(())
    }

    /// Snapshot of name -> tensor, for checkpoints.
    pub fn to_snapshot(&self) -> BTreeMap<String, TensorRecord> {
        self.params
            .iter()
            .map(|p| {
                (
                    p.name.clone(),
                    TensorRecord {
                        shape: p.tensor.shape().to_vec(),
                        values: p.tensor.values().to_vec(),
                    },
                )
            })
            .collect()
    }

    /// Overwrites values from a snapshot. The snapshot must name exactly
    /// the parameters of this store, each with the same shape.
    pub fn load_snapshot(&mut self, snap: &BTreeMap<String, TensorRecord>) -> Result<()> {
        if snap.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.params.len(),
                snap.len()
            )));
        }
        for p in &self.params {
            let rec = snap
                .get(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", p.name)))?;
            if rec.shape != p.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    p.name,
                    rec.shape,
                    p.tensor.shape()
                )));
            }
            if rec.values.len() != p.tensor.len() {
                return Err(Error::Checkpoint(format!("parameter `{}` has wrong value count", p.name)));
            }
        }
        for p in &mut self.params {
            let rec = &snap[&p.name];
            p.tensor.values_mut().copy_from_slice(&rec.values);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Per-parameter gradient accumulator produced by one backward pass.
///
/// Separate accumulators can be merged by summation, which is how gradients
/// from several examples are combined before an optimizer step.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    slots: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn new(n_params: usize) -> Self {
        Self {
            slots: vec![None; n_params],
        }
    }

    pub(crate) fn add(&mut self, id: ParamId, g: &[f64]) {
        if self.slots.len() <= id.0 {
            self.slots.resize(id.0 + 1, None);
        }
        match &mut self.slots[id.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.slots.get(id.0).and_then(|s| s.as_deref())
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }
}
