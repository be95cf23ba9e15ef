//! Masked per-component feature statistics and the CoAdaIN transform.

mod head;
mod mask;
mod moments;
mod transform;

pub use head::{style_to_params, MlpHead, MlpHeadCache, StyleCode, StyleCodeSet};
pub use mask::{downsample_mask, resize_labels_nearest, ComponentMask};
pub use moments::{masked_moments, MaskedMoments};
pub use transform::{
    coadain, coadain_backward, coadain_forward, CoAdaINParamGrads, CoAdaINParams, CoAdaINState, COADAIN_EPS,
};
