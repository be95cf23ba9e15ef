use rand::Rng;

use super::param::{Init, Param};
use crate::error::{Error, Result};
use crate::impl_parameters;

/// Fully connected layer, `y = W x + b` with `W` stored `out × in`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Param,
    pub bias: Param,
}

impl_parameters!(Linear { weight, bias });

impl Linear {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, init: Init, rng: &mut R) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::init(vec![out_features, in_features], in_features, init, rng),
            bias: Param::new(vec![out_features], vec![0.0; out_features]),
        }
    }

    pub fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.in_features {
            return Err(Error::dim(format!(
                "linear layer expects {} inputs, got {}",
                self.in_features,
                x.len()
            )));
        }
        Ok(self
            .weight
            .value
            .chunks(self.in_features)
            .zip(&self.bias.value)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>() + b)
            .collect())
    }

    /// `x` is the forward input; returns the input gradient.
    pub fn backward(&mut self, x: &[f32], grad: &[f32]) -> Vec<f32> {
        debug_assert_eq!(grad.len(), self.out_features);
        let mut dx = vec![0.0f32; self.in_features];
        for (o, &g) in grad.iter().enumerate() {
            self.bias.grad[o] += g;
            let row = &self.weight.value[o * self.in_features..(o + 1) * self.in_features];
            let grow = &mut self.weight.grad[o * self.in_features..(o + 1) * self.in_features];
            for i in 0..self.in_features {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}
