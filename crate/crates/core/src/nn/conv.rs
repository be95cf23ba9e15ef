use rand::Rng;

use super::gemm::gemm;
use super::param::{Init, Param};
use crate::coadain::ComponentMask;
use crate::error::{Error, Result};
use crate::impl_parameters;
use crate::tensor::FeatureMap;

/// 2-D convolution with zero padding, lowered to a single GEMM via im2col.
///
/// A convolution can optionally be *gated* by a component mask: an output
/// pixel then only aggregates input taps that carry the same component label,
/// so features of different components never mix. Gating requires a
/// same-size, stride-1 convolution.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Param,
    pub bias: Param,
}

impl_parameters!(Conv2d { weight, bias });

#[derive(Clone, Debug)]
pub struct ConvCache {
    col: Vec<f32>,
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
    gate: Option<Vec<u16>>,
}

struct Geometry {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = Param::init(vec![out_channels, in_channels, kernel, kernel], fan_in, init, rng);
        let bias = Param::new(vec![out_channels], vec![0.0; out_channels]);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight,
            bias,
        }
    }

    pub fn output_size(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let h = (height + 2 * self.padding).checked_sub(self.kernel)? / self.stride + 1;
        let w = (width + 2 * self.padding).checked_sub(self.kernel)? / self.stride + 1;
        Some((h, w))
    }

    fn geometry(&self, x: &FeatureMap) -> Result<Geometry> {
        if x.channels() != self.in_channels {
            return Err(Error::dim(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let (out_h, out_w) = self
            .output_size(x.height(), x.width())
            .ok_or_else(|| Error::dim(format!("input {:?} smaller than kernel {}", x.shape(), self.kernel)))?;
        Ok(Geometry {
            in_c: x.channels(),
            in_h: x.height(),
            in_w: x.width(),
            out_h,
            out_w,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        })
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.forward_train(x, None).map(|(y, _)| y)
    }

    pub fn forward_gated(&self, x: &FeatureMap, gate: &ComponentMask) -> Result<FeatureMap> {
        self.forward_train(x, Some(gate)).map(|(y, _)| y)
    }

    pub fn forward_train(&self, x: &FeatureMap, gate: Option<&ComponentMask>) -> Result<(FeatureMap, ConvCache)> {
        let g = self.geometry(x)?;
        let gate = match gate {
            None => None,
            Some(mask) => {
                if self.stride != 1 || (g.out_h, g.out_w) != (g.in_h, g.in_w) || mask.spatial_dims() != (g.in_h, g.in_w)
                {
                    return Err(Error::invalid(
                        "gated convolution needs a same-size stride-1 kernel and a matching mask",
                    ));
                }
                Some(mask.labels().to_vec())
            }
        };
        let col = im2col(x.data(), &g, gate.as_deref());
        let ck = g.in_c * g.kernel * g.kernel;
        let hw = g.out_h * g.out_w;
        let mut out = vec![0.0f32; self.out_channels * hw];
        for (o, plane) in out.chunks_mut(hw).enumerate() {
            plane.iter_mut().for_each(|v| *v = self.bias.value[o]);
        }
        gemm(
            self.out_channels,
            ck,
            hw,
            &self.weight.value,
            false,
            &col,
            false,
            &mut out,
            1.0,
        );
        let y = FeatureMap::new(self.out_channels, g.out_h, g.out_w, out)?;
        Ok((
            y,
            ConvCache {
                col,
                in_shape: (g.in_c, g.in_h, g.in_w),
                out_hw: (g.out_h, g.out_w),
                gate,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(
        &mut self,
        cache: &ConvCache,
        grad: &FeatureMap,
        need_input_grad: bool,
    ) -> Result<Option<FeatureMap>> {
        let (out_h, out_w) = cache.out_hw;
        if grad.shape() != (self.out_channels, out_h, out_w) {
            return Err(Error::dim(format!(
                "conv backward expects gradient {:?}, got {:?}",
                (self.out_channels, out_h, out_w),
                grad.shape()
            )));
        }
        let (in_c, in_h, in_w) = cache.in_shape;
        let ck = in_c * self.kernel * self.kernel;
        let hw = out_h * out_w;
        gemm(
            self.out_channels,
            hw,
            ck,
            grad.data(),
            false,
            &cache.col,
            true,
            &mut self.weight.grad,
            1.0,
        );
        for (o, plane) in grad.data().chunks(hw).enumerate() {
            self.bias.grad[o] += plane.iter().sum::<f32>();
        }
        if !need_input_grad {
            return Ok(None);
        }
        let mut dcol = vec![0.0f32; ck * hw];
        gemm(
            ck,
            self.out_channels,
            hw,
            &self.weight.value,
            true,
            grad.data(),
            false,
            &mut dcol,
            0.0,
        );
        let g = Geometry {
            in_c,
            in_h,
            in_w,
            out_h,
            out_w,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        };
        let dx = col2im(&dcol, &g, cache.gate.as_deref());
        Ok(Some(FeatureMap::new(in_c, in_h, in_w, dx)?))
    }
}

fn im2col(x: &[f32], g: &Geometry, gate: Option<&[u16]>) -> Vec<f32> {
    let hw = g.out_h * g.out_w;
    let k = g.kernel;
    let mut col = vec![0.0f32; g.in_c * k * k * hw];
    for ci in 0..g.in_c {
        let plane = &x[ci * g.in_h * g.in_w..(ci + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    let dst = &mut row[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let src = iy * g.in_w + ix as usize;
                        if let Some(labels) = gate {
                            if labels[src] != labels[oy * g.out_w + ox] {
                                continue;
                            }
                        }
                        *d = plane[src];
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &[f32], g: &Geometry, gate: Option<&[u16]>) -> Vec<f32> {
    let hw = g.out_h * g.out_w;
    let k = g.kernel;
    let mut x = vec![0.0f32; g.in_c * g.in_h * g.in_w];
    for ci in 0..g.in_c {
        let plane = &mut x[ci * g.in_h * g.in_w..(ci + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let dst = iy * g.in_w + ix as usize;
                        if let Some(labels) = gate {
                            if labels[dst] != labels[oy * g.out_w + ox] {
                                continue;
                            }
                        }
                        plane[dst] += row[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
    x
}
