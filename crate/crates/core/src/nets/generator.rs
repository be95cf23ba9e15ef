use rand::Rng;

use super::config::ModelConfig;
use super::content::ContentCode;
use crate::coadain::{
    coadain_backward, coadain_forward, downsample_mask, CoAdaINParams, CoAdaINState, ComponentMask, MlpHead,
    MlpHeadCache, StyleCodeSet,
};
use crate::error::{Error, Result};
use crate::impl_parameters;
use crate::nn::{
    relu, relu_backward, tanh, tanh_backward, upsample_nearest, upsample_nearest_backward, Conv2d, ConvCache, Init,
};
use crate::tensor::{FeatureMap, ImageTensor, Modality};

/// Residual block whose normalization layers are CoAdaIN:
/// `x + CoAdaIN(conv(relu(CoAdaIN(conv(x)))))`.
#[derive(Clone, Debug)]
pub struct CoAdaResBlock {
    pub first: Conv2d,
    pub second: Conv2d,
}

impl_parameters!(CoAdaResBlock { first, second });

/// Decodes `content ⊕ one_hot(mask)` and per-component style codes into an
/// image. Every CoAdaIN layer has one parameter head per component.
#[derive(Clone, Debug)]
pub struct Generator {
    pub modality: Modality,
    pub input: Conv2d,
    pub res: Vec<CoAdaResBlock>,
    /// `heads[layer][component]`.
    pub heads: Vec<Vec<MlpHead>>,
    pub ups: Vec<Conv2d>,
    pub output: Conv2d,
    gated: bool,
    num_components: usize,
}

impl_parameters!(Generator {
    input,
    res,
    heads,
    ups,
    output
});

/// Intermediate features recorded during a traced decode.
#[derive(Clone, Debug, Default)]
pub struct GeneratorTrace {
    /// Input to each CoAdaIN layer, in order.
    pub coadain_inputs: Vec<FeatureMap>,
    /// Output of each CoAdaIN layer, in order.
    pub coadain_outputs: Vec<FeatureMap>,
    /// The feature map entering the first upsampling stage.
    pub pre_upsample: Option<FeatureMap>,
    /// The mask at feature resolution used by the CoAdaIN layers.
    pub feature_mask: Option<ComponentMask>,
}

struct ResCache {
    first: ConvCache,
    first_norm: CoAdaINState,
    hidden: FeatureMap,
    second: ConvCache,
    second_norm: CoAdaINState,
}

pub struct GeneratorCache {
    input: ConvCache,
    res: Vec<ResCache>,
    heads: Vec<Vec<Option<MlpHeadCache>>>,
    ups: Vec<(ConvCache, FeatureMap)>,
    output: ConvCache,
    image: FeatureMap,
    content_channels: usize,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, modality: Modality, rng: &mut R) -> Self {
        let c = config.content_channels;
        let k = config.num_components;
        let input = Conv2d::new(c + k, c, 3, 1, 1, Init::Kaiming, rng);
        let res = (0..config.num_res_blocks)
            .map(|_| CoAdaResBlock {
                first: Conv2d::new(c, c, 3, 1, 1, Init::Kaiming, rng),
                second: Conv2d::new(c, c, 3, 1, 1, Init::Kaiming, rng),
            })
            .collect();
        let heads = (0..config.coadain_layers())
            .map(|_| {
                (0..k)
                    .map(|i| MlpHead::new(i, config.style_dim, config.mlp_dim, c, rng))
                    .collect()
            })
            .collect();
        let mut ups = Vec::new();
        let mut ch = c;
        let uk = config.upsample_kernel;
        for _ in 0..config.num_downsamples {
            let out = (ch / 2).max(1);
            ups.push(Conv2d::new(ch, out, uk, 1, uk / 2, Init::Kaiming, rng));
            ch = out;
        }
        let output = Conv2d::new(ch, modality.channels(), 7, 1, 3, Init::Normal(0.02), rng);
        Self {
            modality,
            input,
            res,
            heads,
            ups,
            output,
            gated: config.gated_residual_convs,
            num_components: k,
        }
    }

    fn check(&self, content: &ContentCode, mask: &ComponentMask, styles: &StyleCodeSet) -> Result<ComponentMask> {
        if styles.len() != self.num_components || mask.num_components() != self.num_components {
            return Err(Error::invalid(format!(
                "generator expects {} components, got {} styles and a {}-component mask",
                self.num_components,
                styles.len(),
                mask.num_components()
            )));
        }
        if content.features.channels() + self.num_components != self.input.in_channels {
            return Err(Error::dim("content code channel count does not match the generator"));
        }
        for (i, present) in mask.pixel_counts().iter().map(|&n| n > 0).enumerate() {
            if present && !styles.get(i).present {
                return Err(Error::invalid(format!(
                    "component {i} is present in the mask but its style code is absent"
                )));
            }
        }
        let (h, w) = content.spatial_dims();
        downsample_mask(mask, (h, w))
    }

    fn layer_params(&self, layer: usize, styles: &StyleCodeSet) -> Result<(CoAdaINParams, Vec<Option<MlpHeadCache>>)> {
        let mut per_component = Vec::with_capacity(self.num_components);
        let mut caches = Vec::with_capacity(self.num_components);
        for (head, code) in self.heads[layer].iter().zip(styles.codes()) {
            if code.present {
                let (p, cache) = head.forward_train(code)?;
                per_component.push(p);
                caches.push(Some(cache));
            } else {
                // never applied: the component has no pixels
                per_component.push((vec![0.0; head.channels], vec![1.0; head.channels]));
                caches.push(None);
            }
        }
        Ok((CoAdaINParams::from_components(per_component)?, caches))
    }

    fn res_conv(&self, conv: &Conv2d, x: &FeatureMap, mask: &ComponentMask) -> Result<(FeatureMap, ConvCache)> {
        conv.forward_train(x, self.gated.then_some(mask))
    }

    pub fn forward(&self, content: &ContentCode, mask: &ComponentMask, styles: &StyleCodeSet) -> Result<ImageTensor> {
        self.forward_train(content, mask, styles, None).map(|(img, _)| img)
    }

    pub fn forward_traced(
        &self,
        content: &ContentCode,
        mask: &ComponentMask,
        styles: &StyleCodeSet,
    ) -> Result<(ImageTensor, GeneratorTrace)> {
        let mut trace = GeneratorTrace::default();
        let (img, _) = self.forward_train(content, mask, styles, Some(&mut trace))?;
        Ok((img, trace))
    }

    pub fn forward_train(
        &self,
        content: &ContentCode,
        mask: &ComponentMask,
        styles: &StyleCodeSet,
        mut trace: Option<&mut GeneratorTrace>,
    ) -> Result<(ImageTensor, GeneratorCache)> {
        let fmask = self.check(content, mask, styles)?;
        let x_in = content.features.concat_channels(&fmask.one_hot())?;
        let (mut x, input) = self.input.forward_train(&x_in, None)?;
        let mut res = Vec::with_capacity(self.res.len());
        let mut heads = Vec::with_capacity(self.heads.len());
        for (b, block) in self.res.iter().enumerate() {
            let (p1, h1) = self.layer_params(2 * b, styles)?;
            let (p2, h2) = self.layer_params(2 * b + 1, styles)?;
            heads.push(h1);
            heads.push(h2);
            let (a, first) = self.res_conv(&block.first, &x, &fmask)?;
            let (n1, first_norm) = coadain_forward(&a, &fmask, &p1)?;
            let hidden = relu(&n1);
            let (c2, second) = self.res_conv(&block.second, &hidden, &fmask)?;
            let (n2, second_norm) = coadain_forward(&c2, &fmask, &p2)?;
            if let Some(t) = trace.as_deref_mut() {
                t.coadain_inputs.push(a);
                t.coadain_outputs.push(n1);
                t.coadain_inputs.push(c2);
                t.coadain_outputs.push(n2.clone());
            }
            x.add_assign(&n2);
            res.push(ResCache {
                first,
                first_norm,
                hidden,
                second,
                second_norm,
            });
        }
        if let Some(t) = trace {
            t.pre_upsample = Some(x.clone());
            t.feature_mask = Some(fmask.clone());
        }
        let mut ups = Vec::with_capacity(self.ups.len());
        for conv in &self.ups {
            let (y, cache) = conv.forward_train(&upsample_nearest(&x, 2), None)?;
            x = relu(&y);
            ups.push((cache, x.clone()));
        }
        let (y, output) = self.output.forward_train(&x, None)?;
        let image = tanh(&y);
        Ok((
            ImageTensor::new(self.modality, image.clone())?,
            GeneratorCache {
                input,
                res,
                heads,
                ups,
                output,
                image,
                content_channels: content.features.channels(),
            },
        ))
    }

    /// Returns gradients for the content code and for each component's style
    /// code (zero for absent components).
    pub fn backward(&mut self, cache: GeneratorCache, grad: &FeatureMap) -> Result<(FeatureMap, Vec<Vec<f32>>)> {
        let mut g = tanh_backward(&cache.image, grad);
        g = self
            .output
            .backward(&cache.output, &g, true)?
            .expect("input grad requested");
        for (conv, (cc, out)) in self.ups.iter_mut().zip(cache.ups).rev() {
            g = relu_backward(&out, &g);
            g = conv.backward(&cc, &g, true)?.expect("input grad requested");
            g = upsample_nearest_backward(&g, 2);
        }
        let style_dim = self.heads.first().map_or(0, |h| h[0].hidden.in_features);
        let mut style_grads = vec![vec![0.0f32; style_dim]; self.num_components];
        let mut head_caches = cache.heads;
        for (b, rc) in cache.res.into_iter().enumerate().rev() {
            let block = &mut self.res[b];
            // residual: g flows to x directly and through the branch
            let (gc2, pg2) = coadain_backward(&g, rc.second_norm)?;
            let gh = block
                .second
                .backward(&rc.second, &gc2, true)?
                .expect("input grad requested");
            let gh = relu_backward(&rc.hidden, &gh);
            let (ga, pg1) = coadain_backward(&gh, rc.first_norm)?;
            let gx = block
                .first
                .backward(&rc.first, &ga, true)?
                .expect("input grad requested");
            g.add_assign(&gx);
            let h2 = head_caches.pop().expect("head cache per layer");
            let h1 = head_caches.pop().expect("head cache per layer");
            for (layer, caches, pg) in [(2 * b + 1, h2, pg2), (2 * b, h1, pg1)] {
                let c = pg.target_mean.len() / self.num_components;
                for (i, hc) in caches.into_iter().enumerate() {
                    let Some(hc) = hc else { continue };
                    let gs = self.heads[layer][i].backward(
                        &hc,
                        &pg.target_mean[i * c..(i + 1) * c],
                        &pg.target_std[i * c..(i + 1) * c],
                    );
                    for (a, b) in style_grads[i].iter_mut().zip(gs) {
                        *a += b;
                    }
                }
            }
        }
        let gin = self
            .input
            .backward(&cache.input, &g, true)?
            .expect("input grad requested");
        Ok((gin.leading_channels(cache.content_channels), style_grads))
    }
}
