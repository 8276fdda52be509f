use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state with zero moments for tensors of the given sizes.
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_network(config: AdamConfig, net: &Network) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|p| p.value.len()).collect();
        Self::new(config, &sizes)
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i]
    }

    fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], skip: &[bool]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam",
                format!(
                    "state tracks {} tensors, got {} params and {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.shape() != p.shape() {
                return Err(Error::shape(
                    "adam",
                    format!("tensor {i}: param {:?}, grad {:?}", p.shape(), g.shape()),
                ));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if skip.get(i).copied().unwrap_or(false) {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// One Adam update with bias correction over plain tensors.
pub fn adam_step(state: &mut AdamState, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
    let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
    state.update(&mut refs, grads, &[])
}

impl Network {
    /// Applies one Adam step to every unfrozen parameter.
    pub fn apply_adam(&mut self, state: &mut AdamState, grads: &Gradients) -> Result<()> {
        let skip: Vec<bool> = self.params.iter().map(|p| p.frozen).collect();
        let mut refs: Vec<&mut Tensor> = self.params.iter_mut().map(|p| &mut p.value).collect();
        state.update(&mut refs, grads.tensors(), &skip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_sized() {
        let mut state = AdamState::new(AdamConfig::default(), &[1]);
        let mut p = vec![Tensor::zeros(&[1])];
        let g = vec![Tensor::new(vec![1], vec![1.0]).unwrap()];
        adam_step(&mut state, &mut p, &g).unwrap();
        let expected = -0.001 * (1.0 / (1.0 + 1e-8));
        assert!((p[0].data()[0] - expected).abs() < 1e-18);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut state = AdamState::new(AdamConfig::default(), &[3]);
        let mut p = vec![Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap()];
        let before = p.clone();
        for _ in 0..10 {
            adam_step(&mut state, &mut p, &[Tensor::zeros(&[3])]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut state = AdamState::new(AdamConfig::default(), &[2]);
        let mut p = vec![Tensor::zeros(&[2])];
        assert!(adam_step(&mut state, &mut p, &[Tensor::zeros(&[3])]).is_err());
        assert!(adam_step(&mut state, &mut p, &[]).is_err());
    }
}
