use std::collections::BTreeMap;

use super::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators and step counter for Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros = |p: &ParamSet| {
            p.iter()
                .map(|(n, t)| (n.to_string(), vec![0.0; t.len()]))
                .collect::<BTreeMap<_, _>>()
        };
        Self {
            config,
            step: 0,
            first: zeros(params),
            second: zeros(params),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Bias-corrected Adam update of every parameter, then zeroes the
    /// gradients. Fails before touching anything if any parameter lacks a
    /// gradient from the last backward pass.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for name in params.names() {
            if !params.has_grad(name) {
                return Err(Error::State(format!("parameter `{name}` has no gradient")));
            }
            if !self.first.contains_key(name) {
                return Err(Error::State(format!("parameter `{name}` unknown to optimizer")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (first, second) = (&mut self.first, &mut self.second);
        params.for_each_mut(|name, value, grad, _| {
            let m = first.get_mut(name).expect("checked above");
            let v = second.get_mut(name).expect("checked above");
            for (((w, g), m), v) in value.data_mut().iter_mut().zip(grad).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        });
        params.zero_grads();
        Ok(())
    }
}
