use std::collections::BTreeMap;

use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named parameter values. Read-only during forward/backward passes.
#[derive(Clone, Debug, Default)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl Params {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

/// Gradient accumulators, one per parameter, same shapes as the values.
#[derive(Clone, Debug, Default)]
pub struct Grads {
    values: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(params: &Params) -> Self {
        Self {
            values: params.values.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    /// Adds `delta` into the accumulator for `id`.
    pub fn accumulate(&mut self, id: ParamId, delta: &[f64]) {
        let g = self.values[id.0].data_mut();
        debug_assert_eq!(g.len(), delta.len());
        for (a, b) in g.iter_mut().zip(delta) {
            *a += b;
        }
    }

    /// Adds another gradient set (same layout) into this one.
    pub fn merge(&mut self, other: &Grads) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.values {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }

    pub fn zero(&mut self) {
        for t in &mut self.values {
            t.data_mut().fill(0.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.values.iter().enumerate().map(|(i, t)| (ParamId(i), t))
    }
}

/// Parameters, gradients and AdamW moments with a monotone step counter.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    pub params: Params,
    pub grads: Grads,
    pub(crate) first_moment: Vec<Tensor>,
    pub(crate) second_moment: Vec<Tensor>,
    pub(crate) lr_scale: Vec<f64>,
    pub(crate) step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under a unique name.
    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.params.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = self.params.values.len();
        self.first_moment.push(Tensor::zeros(value.shape()));
        self.second_moment.push(Tensor::zeros(value.shape()));
        self.lr_scale.push(1.0);
        self.params.names.push(name.to_string());
        self.params.index.insert(name.to_string(), id);
        self.grads.values.push(Tensor::zeros(value.shape()));
        self.params.values.push(value);
        Ok(ParamId(id))
    }

    /// Registers a matrix with entries drawn from N(0, std²).
    pub fn add_normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut Rng) -> Result<ParamId> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.normal() * std).collect();
        self.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        self.params.get(id)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Clears the store's gradient accumulators.
    pub fn clear_grads(&mut self) {
        self.grads.zero();
    }

    /// Fresh zeroed gradient set matching this store's layout.
    pub fn zero_grads(&self) -> Grads {
        Grads::zeros_like(&self.params)
    }

    /// Sets the learning-rate multiplier of every parameter whose name starts with `prefix`.
    pub fn set_lr_scale(&mut self, prefix: &str, scale: f64) {
        for (i, name) in self.params.names.iter().enumerate() {
            if name.starts_with(prefix) {
                self.lr_scale[i] = scale;
            }
        }
    }

    /// Copies values of every parameter that also exists (same name and shape) in `other`.
    /// Returns the number of tensors copied.
    pub fn load_matching(&mut self, other: &Params) -> usize {
        let mut copied = 0;
        for (name, value) in other.iter() {
            if let Some(id) = self.params.id(name) {
                if self.params.get(id).shape() == value.shape() {
                    *self.params.get_mut(id) = value.clone();
                    copied += 1;
                }
            }
        }
        copied
    }
}
