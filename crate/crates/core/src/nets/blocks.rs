use rand::Rng;

use crate::coadain::CoAdaINState;
use crate::error::Result;
use crate::impl_parameters;
use crate::nn::{
    instance_norm, instance_norm_backward, leaky_relu, leaky_relu_backward, relu, relu_backward, tanh, tanh_backward,
    Conv2d, ConvCache, Init,
};
use crate::tensor::FeatureMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    None,
    Relu,
    LeakyRelu(f32),
    Tanh,
}

impl Activation {
    fn apply(self, x: FeatureMap) -> FeatureMap {
        match self {
            Activation::None => x,
            Activation::Relu => relu(&x),
            Activation::LeakyRelu(s) => leaky_relu(&x, s),
            Activation::Tanh => tanh(&x),
        }
    }

    fn backward(self, y: &FeatureMap, grad: &FeatureMap) -> FeatureMap {
        match self {
            Activation::None => grad.clone(),
            Activation::Relu => relu_backward(y, grad),
            Activation::LeakyRelu(s) => leaky_relu_backward(y, grad, s),
            Activation::Tanh => tanh_backward(y, grad),
        }
    }
}

/// Convolution, optional instance normalization, activation.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub norm: bool,
    pub act: Activation,
}

impl_parameters!(ConvBlock { conv });

#[derive(Clone, Debug)]
pub struct ConvBlockCache {
    conv: ConvCache,
    norm: Option<CoAdaINState>,
    out: FeatureMap,
}

impl ConvBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        norm: bool,
        act: Activation,
        init: Init,
        rng: &mut R,
    ) -> Self {
        Self {
            conv: Conv2d::new(in_ch, out_ch, kernel, stride, padding, init, rng),
            norm,
            act,
        }
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        let mut y = self.conv.forward(x)?;
        if self.norm {
            y = instance_norm(&y)?.0;
        }
        Ok(self.act.apply(y))
    }

    pub fn forward_train(&self, x: &FeatureMap) -> Result<(FeatureMap, ConvBlockCache)> {
        let (mut y, conv) = self.conv.forward_train(x, None)?;
        let norm = if self.norm {
            let (n, state) = instance_norm(&y)?;
            y = n;
            Some(state)
        } else {
            None
        };
        let out = self.act.apply(y);
        Ok((out.clone(), ConvBlockCache { conv, norm, out }))
    }

    pub fn backward(
        &mut self,
        cache: ConvBlockCache,
        grad: &FeatureMap,
        need_input_grad: bool,
    ) -> Result<Option<FeatureMap>> {
        let mut g = self.act.backward(&cache.out, grad);
        if let Some(state) = cache.norm {
            g = instance_norm_backward(&g, state)?;
        }
        self.conv.backward(&cache.conv, &g, need_input_grad)
    }
}

/// `x + IN(conv(relu(IN(conv(x)))))`.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub first: ConvBlock,
    pub second: ConvBlock,
}

impl_parameters!(ResBlock { first, second });

#[derive(Clone, Debug)]
pub struct ResBlockCache {
    first: ConvBlockCache,
    second: ConvBlockCache,
}

impl ResBlock {
    pub fn new<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Self {
            first: ConvBlock::new(channels, channels, 3, 1, 1, true, Activation::Relu, Init::Kaiming, rng),
            second: ConvBlock::new(channels, channels, 3, 1, 1, true, Activation::None, Init::Kaiming, rng),
        }
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        let mut y = self.second.forward(&self.first.forward(x)?)?;
        y.add_assign(x);
        Ok(y)
    }

    pub fn forward_train(&self, x: &FeatureMap) -> Result<(FeatureMap, ResBlockCache)> {
        let (h, first) = self.first.forward_train(x)?;
        let (mut y, second) = self.second.forward_train(&h)?;
        y.add_assign(x);
        Ok((y, ResBlockCache { first, second }))
    }

    pub fn backward(&mut self, cache: ResBlockCache, grad: &FeatureMap) -> Result<FeatureMap> {
        let gh = self
            .second
            .backward(cache.second, grad, true)?
            .expect("input grad requested");
        let mut gx = self
            .first
            .backward(cache.first, &gh, true)?
            .expect("input grad requested");
        gx.add_assign(grad);
        Ok(gx)
    }
}
