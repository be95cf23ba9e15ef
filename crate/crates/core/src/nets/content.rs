use rand::Rng;

use super::blocks::{Activation, ConvBlock, ConvBlockCache, ResBlock, ResBlockCache};
use super::config::ModelConfig;
use crate::coadain::ComponentMask;
use crate::error::{Error, Result};
use crate::impl_parameters;
use crate::nn::Init;
use crate::tensor::{FeatureMap, ImageTensor, Modality};

/// Spatial content representation produced by a content encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentCode {
    pub features: FeatureMap,
}

impl ContentCode {
    pub fn spatial_dims(&self) -> (usize, usize) {
        self.features.spatial_dims()
    }
}

/// Encodes `image ⊕ one_hot(mask)`: 7×7 stem, strided downsampling, residual
/// blocks, all instance-normalized.
#[derive(Clone, Debug)]
pub struct ContentEncoder {
    pub modality: Modality,
    pub stem: ConvBlock,
    pub downs: Vec<ConvBlock>,
    pub res: Vec<ResBlock>,
}

impl_parameters!(ContentEncoder { stem, downs, res });

#[derive(Clone, Debug)]
pub struct ContentCache {
    stem: ConvBlockCache,
    downs: Vec<ConvBlockCache>,
    res: Vec<ResBlockCache>,
}

pub(crate) fn check_inputs(
    config: &ModelConfig,
    image: &ImageTensor,
    mask: &ComponentMask,
    modality: Modality,
) -> Result<()> {
    if image.modality != modality {
        return Err(Error::invalid(format!(
            "{} network received a {} image",
            modality.name(),
            image.modality.name()
        )));
    }
    if image.spatial_dims() != config.image_size {
        return Err(Error::dim(format!(
            "image is {:?}, model expects {:?}",
            image.spatial_dims(),
            config.image_size
        )));
    }
    if mask.spatial_dims() != image.spatial_dims() {
        return Err(Error::dim(format!(
            "mask is {:?}, image is {:?}",
            mask.spatial_dims(),
            image.spatial_dims()
        )));
    }
    if mask.num_components() != config.num_components {
        return Err(Error::invalid(format!(
            "mask has {} components, model expects {}",
            mask.num_components(),
            config.num_components
        )));
    }
    Ok(())
}

impl ContentEncoder {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, modality: Modality, rng: &mut R) -> Self {
        let in_ch = modality.channels() + config.num_components;
        let f = config.base_filters;
        let stem = ConvBlock::new(in_ch, f, 7, 1, 3, true, Activation::Relu, Init::Kaiming, rng);
        let mut downs = Vec::new();
        let mut ch = f;
        for out in config.encoder_widths() {
            downs.push(ConvBlock::new(
                ch,
                out,
                4,
                2,
                1,
                true,
                Activation::Relu,
                Init::Kaiming,
                rng,
            ));
            ch = out;
        }
        let res = (0..config.num_res_blocks).map(|_| ResBlock::new(ch, rng)).collect();
        Self {
            modality,
            stem,
            downs,
            res,
        }
    }

    fn input(&self, image: &ImageTensor, mask: &ComponentMask) -> Result<FeatureMap> {
        image.pixels.concat_channels(&mask.one_hot())
    }

    pub fn forward(&self, image: &ImageTensor, mask: &ComponentMask) -> Result<ContentCode> {
        let mut x = self.stem.forward(&self.input(image, mask)?)?;
        for d in &self.downs {
            x = d.forward(&x)?;
        }
        for r in &self.res {
            x = r.forward(&x)?;
        }
        Ok(ContentCode { features: x })
    }

    pub fn forward_train(&self, image: &ImageTensor, mask: &ComponentMask) -> Result<(ContentCode, ContentCache)> {
        let (mut x, stem) = self.stem.forward_train(&self.input(image, mask)?)?;
        let mut downs = Vec::with_capacity(self.downs.len());
        for d in &self.downs {
            let (y, c) = d.forward_train(&x)?;
            downs.push(c);
            x = y;
        }
        let mut res = Vec::with_capacity(self.res.len());
        for r in &self.res {
            let (y, c) = r.forward_train(&x)?;
            res.push(c);
            x = y;
        }
        Ok((ContentCode { features: x }, ContentCache { stem, downs, res }))
    }

    /// Returns the gradient with respect to the image channels when requested.
    pub fn backward(
        &mut self,
        cache: ContentCache,
        grad: &FeatureMap,
        need_image_grad: bool,
    ) -> Result<Option<FeatureMap>> {
        let mut g = grad.clone();
        for (r, c) in self.res.iter_mut().zip(cache.res).rev() {
            g = r.backward(c, &g)?;
        }
        for (d, c) in self.downs.iter_mut().zip(cache.downs).rev() {
            g = d.backward(c, &g, true)?.expect("input grad requested");
        }
        let gi = self.stem.backward(cache.stem, &g, need_image_grad)?;
        Ok(gi.map(|g| g.leading_channels(self.modality.channels())))
    }
}
