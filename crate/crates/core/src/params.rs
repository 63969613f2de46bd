use std::collections::BTreeMap;

use lkm_tensor::{Tape, Tensor};
use rand::Rng;

use crate::{Error, Result};

/// Named parameters, iterated in name order. A bound store holds the same
/// values watched on a tape.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.map.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }

    /// Watch every parameter on `tape`.
    pub fn bind(&self, tape: &Tape) -> ParamStore {
        let map = self.map.iter().map(|(k, v)| (k.clone(), tape.watch(v))).collect();
        ParamStore { map }
    }

    /// Untracked copy.
    pub fn detached(&self) -> ParamStore {
        let map = self.map.iter().map(|(k, v)| (k.clone(), v.detach())).collect();
        ParamStore { map }
    }
}

/// Uniform fan-in initialization, variance `1 / fan_in`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Result<Tensor> {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Ok(Tensor::from_vec(data, shape)?)
}
