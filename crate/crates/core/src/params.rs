//! Named trainable tensors and their binding onto a tape.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Standard deviation of the weight initializer.
pub const INIT_STD: f64 = 0.02;

/// Name-ordered map of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Contract(alloc::format!("duplicate parameter {name}")));
        }
        self.params.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    /// Parameters in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Registers every parameter as a trainable leaf, in name order.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect();
        Bound { vars }
    }

    /// Pairs already-recorded tape variables with parameter names, in name
    /// order.
    pub fn attach(&self, vars: &[Var]) -> Result<Bound> {
        if vars.len() != self.params.len() {
            return Err(Error::Contract(alloc::format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                vars.len()
            )));
        }
        let vars = self.params.keys().cloned().zip(vars.iter().copied()).collect();
        Ok(Bound { vars })
    }

    /// Parameter values in name order.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.params.values().cloned().collect()
    }
}

/// Parameter handles for one forward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(alloc::format!("unknown parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Collects gradients after `backward`; parameters the loss does not reach
    /// get zeros.
    pub fn gradients(&self, tape: &Tape) -> Vec<(String, Tensor)> {
        self.vars
            .iter()
            .map(|(k, &v)| {
                let g = tape.grad(v).unwrap_or_else(|| Tensor::zeros(tape.shape(v)));
                (k.clone(), g)
            })
            .collect()
    }
}

/// Seeded initializer that fills a [`ParameterStore`].
pub struct Init<'a> {
    pub store: &'a mut ParameterStore,
    pub rng: &'a mut SeededRng,
}

impl Init<'_> {
    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<String> {
        let n = crate::tensor::numel(shape);
        let data: Vec<f64> = (0..n).map(|_| std * self.rng.normal()).collect();
        self.store.insert(name, Tensor::new(shape, data)?)?;
        Ok(name.to_string())
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<String> {
        self.store.insert(name, Tensor::zeros(shape))?;
        Ok(name.to_string())
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<String> {
        self.store.insert(name, Tensor::ones(shape))?;
        Ok(name.to_string())
    }
}
