use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mlp::MlpParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.003, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        AdamState { config, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn for_params(params: &MlpParams, config: AdamConfig) -> Self {
        Self::new(params.len(), config)
    }
}

/// One bias-corrected ADAM update of `params` along `grads`.
pub fn adam_step(params: &mut [f64], grads: &[f64], opt: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() || opt.m.len() != params.len() {
        return Err(Error::Dimension { expected: params.len(), got: grads.len().min(opt.m.len()) });
    }
    opt.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = opt.config;
    let c1 = 1.0 - beta1.powi(opt.step as i32);
    let c2 = 1.0 - beta2.powi(opt.step as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(opt.m.iter_mut()).zip(opt.v.iter_mut()) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut opt = AdamState::new(3, AdamConfig::default());
        adam_step(&mut p, &[0.0; 3], &mut opt).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn positive_gradient_decreases_param() {
        let mut p = vec![0.5];
        let mut opt = AdamState::new(1, AdamConfig::default());
        adam_step(&mut p, &[2.0], &mut opt).unwrap();
        // First bias-corrected step moves by lr·g/|g|.
        assert!((p[0] - (0.5 - 0.003)).abs() < 1e-9);
    }

    #[test]
    fn convex_loss_does_not_increase() {
        // f(p) = Σ (p_i − c_i)², gradient 2(p − c).
        let c = [1.0, -3.0, 0.5];
        let mut p = vec![0.0; 3];
        let mut opt = AdamState::new(3, AdamConfig { lr: 0.01, ..AdamConfig::default() });
        let f = |p: &[f64]| p.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut last = f(&p);
        for _ in 0..100 {
            let g: Vec<f64> = p.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
            adam_step(&mut p, &g, &mut opt).unwrap();
            let now = f(&p);
            assert!(now <= last + 1e-12);
            last = now;
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut opt = AdamState::new(2, AdamConfig::default());
        assert!(adam_step(&mut [0.0, 0.0], &[1.0], &mut opt).is_err());
    }
}
