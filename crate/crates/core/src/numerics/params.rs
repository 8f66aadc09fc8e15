use indexmap::IndexMap;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub tensor: Tensor,
    pub frozen: bool,
}

/// Named trainable tensors, iterated in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: IndexMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::param(format!("duplicate parameter name {name:?}")));
        }
        self.entries.insert(
            name,
            Param {
                tensor,
                frozen: false,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|p| &p.tensor)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::param(format!("no parameter named {name:?}")))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.get_index_of(name)
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|p| p.frozen)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.values().map(|p| &p.tensor)
    }

    /// Marks every entry frozen. There is deliberately no inverse.
    pub fn freeze_all(&mut self) {
        for p in self.entries.values_mut() {
            p.frozen = true;
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    /// Gradient-shaped zeros.
    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads::new(self.tensors().map(|t| Tensor::zeros(t.shape())).collect())
    }

    pub(crate) fn set_tensor(&mut self, index: usize, tensor: Tensor) {
        let (_, p) = self.entries.get_index_mut(index).expect("index in range");
        p.tensor = tensor;
    }
}

/// Gradients aligned position-by-position with a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    tensors: Vec<Tensor>,
}

impl ParamGrads {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        Self { tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.iter()
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.tensors
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    /// Elementwise `self += other`.
    pub fn accumulate(&mut self, other: &ParamGrads) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::dim(format!(
                "gradient sets have {} and {} entries",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&self, s: f32) -> ParamGrads {
        ParamGrads::new(self.tensors.iter().map(|t| t.scale(s)).collect())
    }
}
