//! Adam with decoupled weight decay.

use lkm_core::ParamStore;
use lkm_tensor::Tensor;

use crate::{Result, TrainError};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { lr: 0.002, weight_decay: 3e-5, beta1: 0.99, beta2: 0.999, eps: 1e-8, epochs: 20, batch_size: 4 }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.batch_size > 0;
        if !ok {
            return Err(TrainError::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moments per parameter plus the step count.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl AdamState {
    /// Flatten into named records: `m.<param>`, `v.<param>`.
    pub fn to_records(&self, out: &mut ParamStore) {
        for (name, t) in self.m.iter() {
            out.insert(format!("m.{name}"), t.clone());
        }
        for (name, t) in self.v.iter() {
            out.insert(format!("v.{name}"), t.clone());
        }
        out.insert("adam.step", Tensor::scalar(self.step as f64));
    }

    pub fn from_records(records: &ParamStore) -> Result<Self> {
        let mut s = AdamState::default();
        for (name, t) in records.iter() {
            if let Some(p) = name.strip_prefix("m.") {
                s.m.insert(p, t.clone());
            } else if let Some(p) = name.strip_prefix("v.") {
                s.v.insert(p, t.clone());
            }
        }
        s.step = records.get("adam.step")?.item() as u64;
        Ok(s)
    }
}

/// One update of every parameter in `params` from the matching entry of
/// `grads` (missing gradients count as zero).
pub fn adam_step(
    params: &mut ParamStore,
    grads: &std::collections::BTreeMap<String, Vec<f64>>,
    state: &mut AdamState,
    cfg: &OptimConfig,
) -> Result<()> {
    for (name, g) in grads {
        let p = params.get(name)?;
        if g.len() != p.numel() {
            return Err(TrainError::Shape(format!("gradient for {name} has {} entries, parameter {}", g.len(), p.numel())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite(name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let p = params.get(&name)?.clone();
        let n = p.numel();
        let zero = vec![0.0; n];
        let g = grads.get(&name).unwrap_or(&zero);
        let m_old = state.m.get(&name).map(Tensor::to_vec).unwrap_or_else(|_| zero.clone());
        let v_old = state.v.get(&name).map(Tensor::to_vec).unwrap_or_else(|_| zero.clone());
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mi = cfg.beta1 * m_old[i] + (1.0 - cfg.beta1) * g[i];
            let vi = cfg.beta2 * v_old[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let update = (mi / c1) / ((vi / c2).sqrt() + cfg.eps) + cfg.weight_decay * p.data()[i];
            m.push(mi);
            v.push(vi);
            out.push(p.data()[i] - cfg.lr * update);
        }
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite(format!("{name}[{i}] after update")));
        }
        let shape = p.shape().to_vec();
        state.m.insert(name.clone(), Tensor::from_vec(m, &shape)?);
        state.v.insert(name.clone(), Tensor::from_vec(v, &shape)?);
        params.insert(name, Tensor::from_vec(out, &shape)?);
    }
    Ok(())
}
