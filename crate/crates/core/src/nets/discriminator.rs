use rand::Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::impl_parameters;
use crate::nn::{avg_pool, avg_pool_backward, leaky_relu, leaky_relu_backward, Conv2d, ConvCache, Init};
use crate::tensor::{FeatureMap, ImageTensor, Modality};

const SLOPE: f32 = 0.2;

/// Three stride-2 4×4 convolutions and a 1×1 logit projection: one logit per
/// 8×8 input patch.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    pub layers: Vec<Conv2d>,
}

impl_parameters!(PatchDiscriminator { layers });

/// Patch discriminators applied to the image at successively halved scales.
#[derive(Clone, Debug)]
pub struct MultiScaleDiscriminator {
    pub modality: Modality,
    pub scales: Vec<PatchDiscriminator>,
}

impl_parameters!(MultiScaleDiscriminator { scales });

pub struct DiscriminatorCache {
    /// Per scale, per layer: conv cache and post-activation output.
    layers: Vec<Vec<(ConvCache, FeatureMap)>>,
}

impl PatchDiscriminator {
    fn new<R: Rng + ?Sized>(in_ch: usize, filters: usize, rng: &mut R) -> Self {
        let init = Init::Normal(0.02);
        Self {
            layers: vec![
                Conv2d::new(in_ch, filters, 4, 2, 1, init, rng),
                Conv2d::new(filters, 2 * filters, 4, 2, 1, init, rng),
                Conv2d::new(2 * filters, 4 * filters, 4, 2, 1, init, rng),
                Conv2d::new(4 * filters, 1, 1, 1, 0, init, rng),
            ],
        }
    }
}

impl MultiScaleDiscriminator {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, modality: Modality, rng: &mut R) -> Self {
        Self {
            modality,
            scales: (0..config.discriminator_scales)
                .map(|_| PatchDiscriminator::new(modality.channels(), config.discriminator_filters, rng))
                .collect(),
        }
    }

    fn check(&self, image: &ImageTensor) -> Result<()> {
        if image.modality != self.modality || image.channels() != self.modality.channels() {
            return Err(Error::invalid(format!(
                "{} discriminator received a {}-channel {} image",
                self.modality.name(),
                image.channels(),
                image.modality.name()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, image: &ImageTensor) -> Result<Vec<FeatureMap>> {
        self.forward_train(image).map(|(l, _)| l)
    }

    pub fn forward_train(&self, image: &ImageTensor) -> Result<(Vec<FeatureMap>, DiscriminatorCache)> {
        self.check(image)?;
        let mut input = image.pixels.clone();
        let mut logits = Vec::with_capacity(self.scales.len());
        let mut layers = Vec::with_capacity(self.scales.len());
        for (s, disc) in self.scales.iter().enumerate() {
            if s > 0 {
                input = avg_pool(&input, 2)?;
            }
            let mut x = input.clone();
            let mut caches = Vec::with_capacity(disc.layers.len());
            let last = disc.layers.len() - 1;
            for (l, conv) in disc.layers.iter().enumerate() {
                let (y, cache) = conv.forward_train(&x, None)?;
                x = if l < last { leaky_relu(&y, SLOPE) } else { y };
                caches.push((cache, x.clone()));
            }
            logits.push(x);
            layers.push(caches);
        }
        Ok((logits, DiscriminatorCache { layers }))
    }

    /// Accumulates parameter gradients; returns the image gradient when asked.
    pub fn backward(
        &mut self,
        cache: DiscriminatorCache,
        grads: &[FeatureMap],
        need_image_grad: bool,
    ) -> Result<Option<FeatureMap>> {
        if grads.len() != self.scales.len() {
            return Err(Error::dim("one logit gradient per discriminator scale required"));
        }
        let mut scale_inputs: Vec<FeatureMap> = Vec::with_capacity(self.scales.len());
        for ((disc, caches), grad) in self.scales.iter_mut().zip(cache.layers).zip(grads) {
            let last = disc.layers.len() - 1;
            let mut g = grad.clone();
            for (l, (conv, (cc, out))) in disc.layers.iter_mut().zip(caches).enumerate().rev() {
                if l < last {
                    g = leaky_relu_backward(&out, &g, SLOPE);
                }
                match conv.backward(&cc, &g, l > 0 || need_image_grad)? {
                    Some(gi) => g = gi,
                    None => break,
                }
            }
            if need_image_grad {
                scale_inputs.push(g);
            }
        }
        if !need_image_grad {
            return Ok(None);
        }
        // fold coarser-scale gradients back through the pooling chain
        let mut acc: Option<FeatureMap> = None;
        for g in scale_inputs.into_iter().rev() {
            acc = Some(match acc {
                None => g,
                Some(coarse) => {
                    let mut fine = avg_pool_backward(&coarse, 2);
                    fine.add_assign(&g);
                    fine
                }
            });
        }
        Ok(acc)
    }
}
