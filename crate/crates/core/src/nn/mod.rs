//! Minimal single-sample layer library with hand-written backward passes.
//!
//! Layers own their parameters (`Param`) and accumulate gradients into them
//! during `backward`. Forward passes used for training return a cache that the
//! matching backward call consumes; the plain `forward` variants skip it.

mod activation;
mod conv;
mod gemm;
mod linear;
mod param;
mod resample;

pub use activation::{leaky_relu, leaky_relu_backward, relu, relu_backward, tanh, tanh_backward};
pub use conv::{Conv2d, ConvCache};
pub use gemm::gemm;
pub use linear::Linear;
pub use param::{join, Init, Param, Parameters};
pub use resample::{avg_pool, avg_pool_backward, upsample_nearest, upsample_nearest_backward};

use crate::coadain::{coadain_backward, coadain_forward, CoAdaINParams, CoAdaINState, ComponentMask};
use crate::error::Result;
use crate::tensor::FeatureMap;

/// Affine-free instance normalization, i.e. single-component CoAdaIN with
/// unit target statistics.
pub fn instance_norm(x: &FeatureMap) -> Result<(FeatureMap, CoAdaINState)> {
    let mask = ComponentMask::uniform(x.height(), x.width(), 1, 0);
    coadain_forward(x, &mask, &CoAdaINParams::identity(1, x.channels()))
}

pub fn instance_norm_backward(grad: &FeatureMap, state: CoAdaINState) -> Result<FeatureMap> {
    coadain_backward(grad, state).map(|(g, _)| g)
}
