use rand::Rng;

use super::blocks::{Activation, ConvBlock, ConvBlockCache};
use super::config::ModelConfig;
use crate::coadain::{ComponentMask, StyleCode, StyleCodeSet};
use crate::error::{Error, Result};
use crate::impl_parameters;
use crate::nn::{Init, Linear};
use crate::tensor::{FeatureMap, ImageTensor, Modality};

/// Style encoder of one component.
///
/// The image is restricted to the component (pixels outside are zeroed), run
/// through a small convolutional trunk, pooled with weights equal to the
/// component's coverage of each feature cell, and projected to the style
/// dimension. The code therefore depends only on pixels of its component.
#[derive(Clone, Debug)]
pub struct StyleEncoder {
    pub component_index: usize,
    pub stem: ConvBlock,
    pub downs: Vec<ConvBlock>,
    pub projection: Linear,
    factor: usize,
}

impl_parameters!(StyleEncoder {
    stem,
    downs,
    projection
});

#[derive(Clone, Debug)]
pub struct StyleCache {
    stem: ConvBlockCache,
    downs: Vec<ConvBlockCache>,
    membership: Vec<bool>,
    /// Coverage weights divided by their sum; empty when the component is absent.
    weights: Vec<f32>,
    features_shape: (usize, usize, usize),
    pooled: Vec<f32>,
}

impl StyleEncoder {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, modality: Modality, component_index: usize, rng: &mut R) -> Self {
        let f = config.base_filters;
        let stem = ConvBlock::new(
            modality.channels(),
            f,
            7,
            1,
            3,
            false,
            Activation::Relu,
            Init::Kaiming,
            rng,
        );
        let mut downs = Vec::new();
        let mut ch = f;
        for _ in 0..config.num_downsamples {
            downs.push(ConvBlock::new(
                ch,
                ch * 2,
                4,
                2,
                1,
                false,
                Activation::Relu,
                Init::Kaiming,
                rng,
            ));
            ch *= 2;
        }
        Self {
            component_index,
            stem,
            downs,
            projection: Linear::new(ch, config.style_dim, Init::Normal(0.05), rng),
            factor: config.downsample_factor(),
        }
    }

    fn masked_input(&self, image: &ImageTensor, membership: &[bool]) -> FeatureMap {
        let mut x = image.pixels.clone();
        for c in 0..x.channels() {
            for (v, &inside) in x.plane_mut(c).iter_mut().zip(membership) {
                if !inside {
                    *v = 0.0;
                }
            }
        }
        x
    }

    fn pooling_weights(&self, mask: &ComponentMask) -> Result<Vec<f32>> {
        let coverage = mask.coverage(self.component_index, self.factor)?;
        let total: f32 = coverage.iter().sum();
        if total == 0.0 {
            return Ok(Vec::new());
        }
        Ok(coverage.into_iter().map(|w| w / total).collect())
    }

    fn pool(features: &FeatureMap, weights: &[f32]) -> Vec<f32> {
        (0..features.channels())
            .map(|c| features.plane(c).iter().zip(weights).map(|(f, w)| f * w).sum())
            .collect()
    }

    fn check(&self, mask: &ComponentMask) -> Result<()> {
        if self.component_index >= mask.num_components() {
            return Err(Error::invalid(format!(
                "component {} not in a {}-component mask",
                self.component_index,
                mask.num_components()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, image: &ImageTensor, mask: &ComponentMask) -> Result<StyleCode> {
        self.check(mask)?;
        let weights = self.pooling_weights(mask)?;
        if weights.is_empty() {
            return Ok(StyleCode::absent(self.component_index, self.projection.out_features));
        }
        let membership = mask.component(self.component_index);
        let mut x = self.stem.forward(&self.masked_input(image, &membership))?;
        for d in &self.downs {
            x = d.forward(&x)?;
        }
        let code = self.projection.forward(&Self::pool(&x, &weights))?;
        StyleCode::new(self.component_index, code)
    }

    /// `None` cache means the component was absent and nothing was computed.
    pub fn forward_train(&self, image: &ImageTensor, mask: &ComponentMask) -> Result<(StyleCode, Option<StyleCache>)> {
        self.check(mask)?;
        let weights = self.pooling_weights(mask)?;
        if weights.is_empty() {
            return Ok((
                StyleCode::absent(self.component_index, self.projection.out_features),
                None,
            ));
        }
        let membership = mask.component(self.component_index);
        let (mut x, stem) = self.stem.forward_train(&self.masked_input(image, &membership))?;
        let mut downs = Vec::with_capacity(self.downs.len());
        for d in &self.downs {
            let (y, c) = d.forward_train(&x)?;
            downs.push(c);
            x = y;
        }
        let pooled = Self::pool(&x, &weights);
        let code = self.projection.forward(&pooled)?;
        Ok((
            StyleCode::new(self.component_index, code)?,
            Some(StyleCache {
                stem,
                downs,
                membership,
                weights,
                features_shape: x.shape(),
                pooled,
            }),
        ))
    }

    pub fn backward(&mut self, cache: StyleCache, grad: &[f32], need_image_grad: bool) -> Result<Option<FeatureMap>> {
        let grad_pooled = self.projection.backward(&cache.pooled, grad);
        let (c, h, w) = cache.features_shape;
        let mut g = FeatureMap::zeros(c, h, w);
        for (ch, &gp) in grad_pooled.iter().enumerate() {
            for (v, &wt) in g.plane_mut(ch).iter_mut().zip(&cache.weights) {
                *v = gp * wt;
            }
        }
        for (d, dc) in self.downs.iter_mut().zip(cache.downs).rev() {
            g = d.backward(dc, &g, true)?.expect("input grad requested");
        }
        let gi = self.stem.backward(cache.stem, &g, need_image_grad)?;
        Ok(gi.map(|mut gi| {
            for ch in 0..gi.channels() {
                for (v, &inside) in gi.plane_mut(ch).iter_mut().zip(&cache.membership) {
                    if !inside {
                        *v = 0.0;
                    }
                }
            }
            gi
        }))
    }
}

/// One independent style encoder per component.
#[derive(Clone, Debug)]
pub struct StyleEncoderBank {
    pub encoders: Vec<StyleEncoder>,
}

impl_parameters!(StyleEncoderBank { encoders });

impl StyleEncoderBank {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, modality: Modality, rng: &mut R) -> Self {
        Self {
            encoders: (0..config.num_components)
                .map(|i| StyleEncoder::new(config, modality, i, rng))
                .collect(),
        }
    }

    pub fn encode(&self, image: &ImageTensor, mask: &ComponentMask, component: usize) -> Result<StyleCode> {
        self.encoders
            .get(component)
            .ok_or_else(|| Error::invalid(format!("no style encoder for component {component}")))?
            .forward(image, mask)
    }

    pub fn encode_all(&self, image: &ImageTensor, mask: &ComponentMask) -> Result<StyleCodeSet> {
        let codes = self
            .encoders
            .iter()
            .map(|e| e.forward(image, mask))
            .collect::<Result<Vec<_>>>()?;
        StyleCodeSet::new(codes)
    }

    pub fn forward_train(
        &self,
        image: &ImageTensor,
        mask: &ComponentMask,
    ) -> Result<(StyleCodeSet, Vec<Option<StyleCache>>)> {
        let mut codes = Vec::new();
        let mut caches = Vec::new();
        for e in &self.encoders {
            let (code, cache) = e.forward_train(image, mask)?;
            codes.push(code);
            caches.push(cache);
        }
        Ok((StyleCodeSet::new(codes)?, caches))
    }

    /// `grads[i]` is the gradient for component `i`'s code. Returns the summed
    /// image gradient when requested.
    pub fn backward(
        &mut self,
        caches: Vec<Option<StyleCache>>,
        grads: &[Vec<f32>],
        need_image_grad: bool,
    ) -> Result<Option<FeatureMap>> {
        let mut total: Option<FeatureMap> = None;
        for ((enc, cache), g) in self.encoders.iter_mut().zip(caches).zip(grads) {
            let Some(cache) = cache else { continue };
            if let Some(gi) = enc.backward(cache, g, need_image_grad)? {
                match &mut total {
                    Some(t) => t.add_assign(&gi),
                    None => total = Some(gi),
                }
            }
        }
        Ok(total)
    }
}
