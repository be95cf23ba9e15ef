use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::impl_parameters;
use crate::nn::{Init, Linear};
use crate::tensor::Scalar;

/// Style code of one component. A code encoded from a region with no pixels
/// is flagged absent; its values are zero and carry no information.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleCode<T = f32> {
    pub component_index: usize,
    pub values: Vec<T>,
    pub present: bool,
}

impl<T: Scalar> StyleCode<T> {
    pub fn new(component_index: usize, values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("style code of component {component_index}")));
        }
        Ok(Self {
            component_index,
            values,
            present: true,
        })
    }

    pub fn absent(component_index: usize, dim: usize) -> Self {
        Self {
            component_index,
            values: vec![T::zero(); dim],
            present: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl StyleCode<f32> {
    /// Draws every entry from `N(0, 1)`.
    pub fn sample<R: Rng + ?Sized>(component_index: usize, dim: usize, rng: &mut R) -> Self {
        let values = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        Self {
            component_index,
            values,
            present: true,
        }
    }
}

/// One style code per component, indexed `0..K`.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleCodeSet<T = f32> {
    codes: Vec<StyleCode<T>>,
}

impl<T: Scalar> StyleCodeSet<T> {
    pub fn new(codes: Vec<StyleCode<T>>) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::invalid("style code set needs at least one component"));
        }
        let dim = codes[0].dim();
        for (i, code) in codes.iter().enumerate() {
            if code.component_index != i {
                return Err(Error::invalid(format!(
                    "style code at position {i} is tagged for component {}",
                    code.component_index
                )));
            }
            if code.dim() != dim {
                return Err(Error::dim("style codes of unequal dimension"));
            }
        }
        Ok(Self { codes })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.codes[0].dim()
    }

    pub fn get(&self, component: usize) -> &StyleCode<T> {
        &self.codes[component]
    }

    pub fn codes(&self) -> &[StyleCode<T>] {
        &self.codes
    }

    /// Replaces one component's code, keeping the others.
    pub fn with_code(&self, code: StyleCode<T>) -> Result<Self> {
        let mut codes = self.codes.clone();
        let i = code.component_index;
        if i >= codes.len() {
            return Err(Error::invalid(format!("component {i} out of range")));
        }
        codes[i] = code;
        Self::new(codes)
    }
}

impl StyleCodeSet<f32> {
    pub fn sample<R: Rng + ?Sized>(num_components: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            codes: (0..num_components).map(|i| StyleCode::sample(i, dim, rng)).collect(),
        }
    }
}

/// Two-layer perceptron mapping one component's style code to the target
/// `(mean, std)` of every channel of one CoAdaIN layer.
#[derive(Clone, Debug)]
pub struct MlpHead {
    pub component_index: usize,
    pub channels: usize,
    pub hidden: Linear,
    pub output: Linear,
}

impl_parameters!(MlpHead { hidden, output });

/// Hidden activation kept for [`MlpHead::backward`].
#[derive(Clone, Debug)]
pub struct MlpHeadCache {
    style: Vec<f32>,
    hidden: Vec<f32>,
}

impl MlpHead {
    pub fn new<R: Rng + ?Sized>(
        component_index: usize,
        style_dim: usize,
        hidden_dim: usize,
        channels: usize,
        rng: &mut R,
    ) -> Self {
        let hidden = Linear::new(style_dim, hidden_dim, Init::Kaiming, rng);
        let mut output = Linear::new(hidden_dim, 2 * channels, Init::Normal(0.02), rng);
        // start close to "keep the normalized features": std ~ 1, mean ~ 0
        output.bias.value[channels..].iter_mut().for_each(|b| *b = 1.0);
        Self {
            component_index,
            channels,
            hidden,
            output,
        }
    }

    pub fn forward_train(&self, style: &StyleCode) -> Result<((Vec<f32>, Vec<f32>), MlpHeadCache)> {
        if style.component_index != self.component_index {
            return Err(Error::invalid(format!(
                "head for component {} received style of component {}",
                self.component_index, style.component_index
            )));
        }
        let mut hidden = self.hidden.forward(&style.values)?;
        hidden.iter_mut().for_each(|h| *h = h.max(0.0));
        let mut out = self.output.forward(&hidden)?;
        let std = out.split_off(self.channels);
        Ok((
            (out, std),
            MlpHeadCache {
                style: style.values.clone(),
                hidden,
            },
        ))
    }

    /// Returns the gradient with respect to the style code.
    pub fn backward(&mut self, cache: &MlpHeadCache, grad_mean: &[f32], grad_std: &[f32]) -> Vec<f32> {
        let mut grad_out = Vec::with_capacity(2 * self.channels);
        grad_out.extend_from_slice(grad_mean);
        grad_out.extend_from_slice(grad_std);
        let mut grad_hidden = self.output.backward(&cache.hidden, &grad_out);
        for (g, &h) in grad_hidden.iter_mut().zip(&cache.hidden) {
            if h <= 0.0 {
                *g = 0.0;
            }
        }
        self.hidden.backward(&cache.style, &grad_hidden)
    }
}

/// Evaluates a component's parameter head: `(target_mean, target_std)`.
pub fn style_to_params(style: &StyleCode, head: &MlpHead) -> Result<(Vec<f32>, Vec<f32>)> {
    head.forward_train(style).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn head_with(component: usize, style_dim: usize, hidden: usize, channels: usize) -> MlpHead {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        MlpHead::new(component, style_dim, hidden, channels, &mut rng)
    }

    #[test]
    fn zero_head_gives_zero_params() {
        let mut head = head_with(0, 4, 6, 3);
        for p in [
            &mut head.hidden.weight,
            &mut head.hidden.bias,
            &mut head.output.weight,
            &mut head.output.bias,
        ] {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let style = StyleCode::new(0, vec![0.5, -1.0, 2.0, 3.0]).unwrap();
        let (m, s) = style_to_params(&style, &head).unwrap();
        assert_eq!(m, vec![0.0; 3]);
        assert_eq!(s, vec![0.0; 3]);
    }

    #[test]
    fn identity_head_splits_style() {
        // d_s = 2C, hidden = identity on positive inputs, output = identity
        let c = 2;
        let mut head = head_with(1, 2 * c, 2 * c, c);
        let eye: Vec<f32> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        head.hidden.weight = Param::new(vec![4, 4], eye.clone());
        head.output.weight = Param::new(vec![4, 4], eye);
        head.hidden.bias.value.iter_mut().for_each(|v| *v = 0.0);
        head.output.bias.value.iter_mut().for_each(|v| *v = 0.0);
        let style = StyleCode::new(1, vec![0.25, 1.5, 2.0, 0.75]).unwrap();
        let (m, s) = style_to_params(&style, &head).unwrap();
        assert_eq!(m, vec![0.25, 1.5]);
        assert_eq!(s, vec![2.0, 0.75]);
    }

    #[test]
    fn component_mismatch_is_rejected() {
        let head = head_with(0, 3, 4, 2);
        let style = StyleCode::new(1, vec![0.0; 3]).unwrap();
        assert!(matches!(style_to_params(&style, &head), Err(Error::Validation(_))));
    }

    #[test]
    fn set_requires_ordered_components() {
        let a = StyleCode::<f32>::new(1, vec![0.0]).unwrap();
        let b = StyleCode::<f32>::new(0, vec![0.0]).unwrap();
        assert!(StyleCodeSet::new(vec![a, b]).is_err());
    }
}
