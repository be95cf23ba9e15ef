//! Adam with L2 weight decay folded into the gradient.

use std::collections::BTreeMap;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Param;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// One Adam step on a flat array. `step` is the 1-based update count used for
/// bias correction.
pub fn adam_update<T: Float>(value: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], step: u64, cfg: &AdamConfig) {
    debug_assert!(step >= 1);
    let c = |x: f64| T::from(x).expect("representable constant");
    let (b1, b2) = (c(cfg.beta1), c(cfg.beta2));
    let wd = c(cfg.weight_decay);
    let lr = c(cfg.learning_rate);
    let eps = c(cfg.eps);
    let bc1 = T::one() - b1.powi(step as i32);
    let bc2 = T::one() - b2.powi(step as i32);
    for i in 0..value.len() {
        let g = grad[i] + wd * value[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        value[i] = value[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

/// Optimizer state for one parameter group, keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter passed through `visit`, using the
    /// gradients accumulated in them.
    pub fn step(&mut self, visit: impl FnOnce(&mut dyn FnMut(&str, &mut Param))) -> Result<()> {
        self.step += 1;
        let step = self.step;
        let cfg = self.config;
        let state = &mut self.state;
        let mut failure = None;
        visit(&mut |name, p| {
            if failure.is_some() {
                return;
            }
            let s = state.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
            });
            if s.m.len() != p.len() {
                failure = Some(name.to_string());
                return;
            }
            adam_update(&mut p.value, &p.grad, &mut s.m, &mut s.v, step, &cfg);
        });
        match failure {
            Some(name) => Err(Error::dim(format!("optimizer state for {name} has the wrong length"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_matches_closed_form() {
        // f(x) = 0.5 * a * (x - b)^2, gradient a (x - b)
        let cfg = AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.1,
        };
        let (a, b, x0) = (3.0f64, -1.0, 2.0);
        let mut x = [x0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut x, &[a * (x0 - b)], &mut m, &mut v, 1, &cfg);
        // first step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
        let g = a * (x0 - b) + cfg.weight_decay * x0;
        let expected = x0 - cfg.learning_rate * g / (g.abs() + cfg.eps);
        assert!((x[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut x = [1.0f32, -2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_update(&mut x, &[0.3, 0.7], &mut m, &mut v, 1, &cfg);
        assert_eq!(x, [1.0, -2.0]);
    }

    #[test]
    fn second_step_bias_correction() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut x = [0.0f64];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut x, &[1.0], &mut m, &mut v, 1, &cfg);
        adam_update(&mut x, &[-1.0], &mut m, &mut v, 2, &cfg);
        let m2 = 0.5 * 0.5 * 1.0 + -0.5;
        let v2 = 0.999 * 0.001 + 0.001;
        let step2 = 1e-4 * (m2 / (1.0 - 0.25)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        let step1 = 1e-4 * 1.0 / (1.0 + 1e-8);
        assert!((x[0] - (-step1 - step2)).abs() < 1e-12);
    }
}
