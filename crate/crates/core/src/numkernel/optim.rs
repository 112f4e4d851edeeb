use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Moments {
    first: Tensor,
    second: Tensor,
}

/// Named parameters plus adaptive-moment optimizer state.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
    moments: BTreeMap<String, Moments>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts (or replaces) a parameter and resets its moments.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        self.moments.insert(
            name.clone(),
            Moments {
                first: Tensor::zeros(value.shape()),
                second: Tensor::zeros(value.shape()),
            },
        );
        self.entries.insert(name, value);
    }

    /// Uniform initialisation in `[-bound, bound]`.
    pub fn insert_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: [usize; 2],
        bound: f64,
        rng: &mut R,
    ) {
        let data = (0..shape[0] * shape[1])
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        self.insert(name, Tensor::new(shape.to_vec(), data).expect("shape"));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn param_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Moves the entries of `grads` that belong to this store into a new map.
    pub fn take_own(&self, grads: &mut Gradients) -> Gradients {
        self.entries
            .keys()
            .filter_map(|k| grads.remove(k).map(|g| (k.clone(), g)))
            .collect()
    }

    fn check_names(&self, grads: &Gradients) -> Result<()> {
        let missing: Vec<String> = self
            .entries
            .keys()
            .filter(|k| !grads.contains_key(*k))
            .cloned()
            .collect();
        let extra: Vec<String> = grads
            .keys()
            .filter(|k| !self.entries.contains_key(*k))
            .cloned()
            .collect();
        if missing.is_empty() && extra.is_empty() {
            Ok(())
        } else {
            Err(Error::NameMismatch { missing, extra })
        }
    }

    /// One bias-corrected adaptive-moment update.
    pub fn adam_step(&mut self, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
        self.check_names(grads)?;
        for (name, g) in grads {
            if g.shape() != self.entries[name].shape() {
                return Err(Error::invalid(format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    self.entries[name].shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (name, g) in grads {
            let m = self.moments.get_mut(name).expect("moments track entries");
            let p = self.entries.get_mut(name).expect("checked");
            let it = p
                .data_mut()
                .iter_mut()
                .zip(m.first.data_mut())
                .zip(m.second.data_mut())
                .zip(g.data());
            for (((p, m1), m2), &g) in it {
                *m1 = cfg.beta1 * *m1 + (1.0 - cfg.beta1) * g;
                *m2 = cfg.beta2 * *m2 + (1.0 - cfg.beta2) * g * g;
                let mhat = *m1 / c1;
                let vhat = *m2 / c2;
                *p -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`ParamStore::adam_step`].
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    params.adam_step(
        grads,
        &AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        },
    )
}

pub fn global_norm(grads: &Gradients) -> f64 {
    grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.scale_in_place(s);
        }
    }
    norm
}
