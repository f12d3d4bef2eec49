use serde::{Deserialize, Serialize};

use super::Gradients;
use crate::error::{Error, Result};
use crate::network::ParamId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(config: AdamConfig, params: &[(ParamId, &[f64])]) -> Self {
        let sizes: Vec<usize> = params.iter().map(|(_, p)| p.len()).collect();
        Self::new(config, &sizes)
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::shape("adam tensors", self.first.len(), params.len().min(grads.len())));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::shape("adam tensor", m.len(), p.len().min(g.len())));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to a network's parameters given matching gradients.
pub fn adam_step(params: Vec<(ParamId, &mut [f64])>, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if params.len() != grads.groups.len() {
        return Err(Error::shape("gradient groups", params.len(), grads.groups.len()));
    }
    for ((pid, _), (gid, _)) in params.iter().zip(&grads.groups) {
        if pid != gid {
            return Err(Error::shape("gradient order", pid, gid));
        }
    }
    let mut p: Vec<&mut [f64]> = params.into_iter().map(|(_, p)| p).collect();
    let g: Vec<&[f64]> = grads.groups.iter().map(|(_, g)| g.as_slice()).collect();
    state.update(&mut p, &g)
}
