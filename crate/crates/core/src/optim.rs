//! Adam with bias correction and no weight decay.

use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, ParamGroup, TensorKind};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates, one slot per learnable tensor in `ModelParams::tensors` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ModelParams<T>) -> Self {
        let shapes: Vec<usize> = params
            .tensors()
            .iter()
            .filter(|t| matches!(t.1, TensorKind::Learnable(_)))
            .map(|t| t.2.len())
            .collect();
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    /// One update of every learnable tensor whose group is in `groups`.
    pub fn update(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, groups: &[ParamGroup]) {
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let correction1 = T::one() - T::of(c.beta1.powf(self.step as f64));
        let correction2 = T::one() - T::of(c.beta2.powf(self.step as f64));
        let lr = T::of(c.learning_rate);
        let eps = T::of(c.eps);
        let grad_tensors = grads.tensors();
        let mut slot = 0;
        for ((_, kind, p), (_, _, g)) in params.tensors_mut().into_iter().zip(grad_tensors) {
            let TensorKind::Learnable(group) = kind else { continue };
            if groups.contains(&group) {
                let (m, v) = (&mut self.first[slot], &mut self.second[slot]);
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                    v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                    let m_hat = m[i] / correction1;
                    let v_hat = v[i] / correction2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            slot += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};

    #[test]
    fn first_step_moves_by_learning_rate_and_skips_frozen_groups() {
        let mut p: ModelParams<f64> = init_params(&ModelConfig::toy(), 0).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.regressor.as_mut().unwrap().layers[0].weight[0] = 3.0;
        g.encoder.layers[0].conv.weight[0] = -2.0;
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.update(&mut p, &g, &[ParamGroup::Regressor]);
        let moved = p.regressor.as_ref().unwrap().layers[0].weight[0] - before.regressor.as_ref().unwrap().layers[0].weight[0];
        assert!((moved + 1e-3).abs() < 1e-9);
        assert_eq!(p.encoder, before.encoder);
        // zero gradient leaves the rest untouched
        assert_eq!(p.regressor.as_ref().unwrap().layers[1], before.regressor.as_ref().unwrap().layers[1]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        // drive one bias towards 0.7 through the optimizer API
        let mut p: ModelParams<f64> = init_params(&ModelConfig::toy(), 1).unwrap();
        let mut adam = Adam::new(AdamConfig { learning_rate: 0.05, ..Default::default() }, &p);
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            let b = p.regressor.as_ref().unwrap().layers[3].bias[0];
            g.regressor.as_mut().unwrap().layers[3].bias[0] = 2.0 * (b - 0.7);
            adam.update(&mut p, &g, &[ParamGroup::Regressor]);
        }
        assert!((p.regressor.as_ref().unwrap().layers[3].bias[0] - 0.7).abs() < 1e-3);
    }
}
