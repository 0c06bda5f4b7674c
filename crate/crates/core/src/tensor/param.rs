use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Entry {
    value: Tensor,
    grad: Vec<f64>,
    has_grad: bool,
}

/// Named trainable tensors with a gradient buffer of identical shape.
///
/// Iteration order is the lexicographic order of the names, which keeps
/// serialization and gradient-norm reductions deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Entry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        let grad = vec![0.0; value.len()];
        self.entries.insert(
            name,
            Entry {
                value,
                grad,
                has_grad: false,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))
    }

    pub fn grad(&self, name: &str) -> Result<&[f64]> {
        self.entries
            .get(name)
            .map(|e| e.grad.as_slice())
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))
    }

    pub fn has_grad(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.has_grad)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, grad: &[f64]) -> Result<()> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))?;
        if e.grad.len() != grad.len() {
            return Err(Error::dim(format!("gradient of `{name}`"), e.grad.len(), grad.len()));
        }
        for (g, d) in e.grad.iter_mut().zip(grad) {
            *g += d;
        }
        e.has_grad = true;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(0.0);
            e.has_grad = false;
        }
    }

    /// L2 norm over every gradient buffer.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|e| e.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for e in self.entries.values_mut() {
            for g in &mut e.grad {
                *g *= factor;
            }
        }
    }

    pub(crate) fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor, &[f64], bool)) {
        for (name, e) in self.entries.iter_mut() {
            f(name, &mut e.value, &e.grad, e.has_grad);
        }
    }
}
