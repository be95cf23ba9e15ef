//! The component-aware AdaIN transform and its analytic gradient.
//!
//! For a pixel `p` of component `i` and channel `c`:
//!
//! ```text
//! y[c, p] = target_std[i, c] * (x[c, p] - mean[i, c]) / sqrt(var[i, c] + eps) + target_mean[i, c]
//! ```
//!
//! where `mean`/`var` are the masked moments of `x`. Negative `target_std`
//! values are used as given and flip the contrast of that component.

use crate::coadain::mask::ComponentMask;
use crate::coadain::moments::{check_mask_matches, masked_moments};
use crate::error::{Error, Result};
use crate::tensor::{cast, FeatureMap, Scalar};

pub const COADAIN_EPS: f64 = 1e-5;

/// Target statistics for every component and channel (`K × C`, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct CoAdaINParams<T = f32> {
    num_components: usize,
    channels: usize,
    pub target_mean: Vec<T>,
    pub target_std: Vec<T>,
}

impl<T: Scalar> CoAdaINParams<T> {
    pub fn new(num_components: usize, channels: usize, target_mean: Vec<T>, target_std: Vec<T>) -> Result<Self> {
        let n = num_components * channels;
        if num_components == 0 || channels == 0 || target_mean.len() != n || target_std.len() != n {
            return Err(Error::dim(format!(
                "params for {num_components} components x {channels} channels need {n} means and stds, got {} and {}",
                target_mean.len(),
                target_std.len()
            )));
        }
        Ok(Self {
            num_components,
            channels,
            target_mean,
            target_std,
        })
    }

    /// Assembles params from one `(mean, std)` pair of length `C` per component.
    pub fn from_components(per_component: Vec<(Vec<T>, Vec<T>)>) -> Result<Self> {
        let k = per_component.len();
        let c = per_component.first().map_or(0, |(m, _)| m.len());
        let mut mean = Vec::with_capacity(k * c);
        let mut std = Vec::with_capacity(k * c);
        for (m, s) in per_component {
            if m.len() != c || s.len() != c {
                return Err(Error::dim("per-component params of unequal length"));
            }
            mean.extend(m);
            std.extend(s);
        }
        Self::new(k, c, mean, std)
    }

    /// Mean 0, std 1 for every component: plain (per-component) normalization.
    pub fn identity(num_components: usize, channels: usize) -> Self {
        let n = num_components * channels;
        Self::new(num_components, channels, vec![T::zero(); n], vec![T::one(); n])
            .expect("identity params are well formed")
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
}

/// Forward state consumed by [`coadain_backward`].
#[derive(Clone, Debug)]
pub struct CoAdaINState<T = f32> {
    mask: ComponentMask,
    normalized: FeatureMap<T>,
    /// `1 / sqrt(var + eps)`, `K × C`.
    inv_std: Vec<T>,
    target_std: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoAdaINParamGrads<T = f32> {
    pub target_mean: Vec<T>,
    pub target_std: Vec<T>,
}

fn check_params<T: Scalar>(x: &FeatureMap<T>, mask: &ComponentMask, params: &CoAdaINParams<T>) -> Result<()> {
    check_mask_matches(x, mask)?;
    if params.num_components() != mask.num_components() {
        return Err(Error::invalid(format!(
            "params cover {} components but mask has {}",
            params.num_components(),
            mask.num_components()
        )));
    }
    if params.channels() != x.channels() {
        return Err(Error::dim(format!(
            "params cover {} channels but features have {}",
            params.channels(),
            x.channels()
        )));
    }
    Ok(())
}

pub fn coadain<T: Scalar>(x: &FeatureMap<T>, mask: &ComponentMask, params: &CoAdaINParams<T>) -> Result<FeatureMap<T>> {
    coadain_forward(x, mask, params).map(|(y, _)| y)
}

pub fn coadain_forward<T: Scalar>(
    x: &FeatureMap<T>,
    mask: &ComponentMask,
    params: &CoAdaINParams<T>,
) -> Result<(FeatureMap<T>, CoAdaINState<T>)> {
    check_params(x, mask, params)?;
    x.ensure_finite("coadain input")?;
    let moments = masked_moments(x, mask)?;
    let eps = cast::<T>(COADAIN_EPS);
    let c = x.channels();
    let inv_std: Vec<T> = moments.vars().iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let labels = mask.labels();
    let mut normalized = x.clone();
    let mut out = x.clone();
    for ch in 0..c {
        let xn = normalized.plane_mut(ch);
        for (v, &l) in xn.iter_mut().zip(labels) {
            let idx = l as usize * c + ch;
            *v = (*v - moments.means()[idx]) * inv_std[idx];
        }
        let xn = normalized.plane(ch);
        for ((o, &n), &l) in out.plane_mut(ch).iter_mut().zip(xn).zip(labels) {
            let idx = l as usize * c + ch;
            *o = params.target_std[idx] * n + params.target_mean[idx];
        }
    }
    Ok((
        out,
        CoAdaINState {
            mask: mask.clone(),
            normalized,
            inv_std,
            target_std: params.target_std.clone(),
        },
    ))
}

/// Gradients with respect to the input features and the target statistics,
/// including the dependence of the masked moments on the input.
pub fn coadain_backward<T: Scalar>(
    grad_out: &FeatureMap<T>,
    state: CoAdaINState<T>,
) -> Result<(FeatureMap<T>, CoAdaINParamGrads<T>)> {
    let CoAdaINState {
        mask,
        normalized,
        inv_std,
        target_std,
    } = state;
    if !grad_out.same_shape(&normalized) {
        return Err(Error::invalid(format!(
            "stale coadain state: gradient {:?} does not match saved forward {:?}",
            grad_out.shape(),
            normalized.shape()
        )));
    }
    let k = mask.num_components();
    let c = normalized.channels();
    let counts = mask.pixel_counts();
    let labels = mask.labels();
    let mut grad_mean = vec![T::zero(); k * c];
    let mut grad_std = vec![T::zero(); k * c];
    let mut grad_x = FeatureMap::zeros(c, normalized.height(), normalized.width());
    // per component: sum(g) and sum(g * xhat)
    let mut sum_g = vec![T::zero(); k];
    let mut sum_gx = vec![T::zero(); k];
    for ch in 0..c {
        sum_g.iter_mut().for_each(|v| *v = T::zero());
        sum_gx.iter_mut().for_each(|v| *v = T::zero());
        let g = grad_out.plane(ch);
        let xn = normalized.plane(ch);
        for ((&gv, &n), &l) in g.iter().zip(xn).zip(labels) {
            let l = l as usize;
            sum_g[l] = sum_g[l] + gv;
            sum_gx[l] = sum_gx[l] + gv * n;
        }
        for i in 0..k {
            grad_mean[i * c + ch] = sum_g[i];
            grad_std[i * c + ch] = sum_gx[i];
        }
        // dxhat = g * gamma; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
        let gx = grad_x.plane_mut(ch);
        for (p, (&gv, &n)) in g.iter().zip(xn).enumerate() {
            let l = labels[p] as usize;
            let idx = l * c + ch;
            let gamma = target_std[idx];
            let count = cast::<T>(counts[l] as f64);
            let mean_dxhat = gamma * sum_g[l] / count;
            let mean_dxhat_xhat = gamma * sum_gx[l] / count;
            gx[p] = inv_std[idx] * (gamma * gv - mean_dxhat - n * mean_dxhat_xhat);
        }
    }
    Ok((
        grad_x,
        CoAdaINParamGrads {
            target_mean: grad_mean,
            target_std: grad_std,
        },
    ))
}
