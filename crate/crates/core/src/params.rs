//! Named, ordered collection of trainable tensors.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A named parameter with its initialization fan-in.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub fan_in: usize,
}

/// Parameters in registration order. Names are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

/// Uniform draw in `[0, 1)` from the top 53 bits of a `u64`.
pub fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Registering the same name twice is an error.
    pub fn register(&mut self, name: &str, value: Tensor, fan_in: usize) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::ParamMismatch(format!("`{name}` registered twice")));
        }
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
            fan_in,
        });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.position(name).map(move |i| &mut self.params[i].value)
    }

    pub fn by_index(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.params[i].value
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Re-draws every parameter uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
    /// in registration order.
    pub fn init_uniform(&mut self, rng: &mut ChaCha8Rng) {
        for p in &mut self.params {
            let bound = 1.0 / libm::sqrt(p.fan_in.max(1) as f64);
            for v in p.value.data_mut() {
                *v = (2.0 * unit_f64(rng) - 1.0) * bound;
            }
        }
    }

    /// Copies values from `other`, which must have the same names and shapes in
    /// the same order. The error names the first mismatch.
    pub fn load_from(&mut self, other: &[(String, Tensor)]) -> Result<()> {
        for (i, p) in self.params.iter().enumerate() {
            match other.get(i) {
                None => return Err(Error::ParamMismatch(format!("`{}` missing from source", p.name))),
                Some((name, t)) if *name != p.name || t.shape() != p.value.shape() => {
                    return Err(Error::ParamMismatch(format!(
                        "`{}` {:?} vs `{}` {:?}",
                        p.name,
                        p.value.shape(),
                        name,
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        if other.len() > self.params.len() {
            return Err(Error::ParamMismatch(format!(
                "unexpected parameter `{}`",
                other[self.params.len()].0
            )));
        }
        for (p, (_, t)) in self.params.iter_mut().zip(other) {
            p.value = t.clone();
        }
        Ok(())
    }

    /// `(name, tensor)` pairs in registration order.
    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect()
    }
}
