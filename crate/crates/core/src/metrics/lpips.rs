use super::extractor::FeatureExtractor;
use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, ImageTensor};

const NORM_EPS: f64 = 1e-10;

/// Squared distance between the channel-normalised feature vectors at each
/// pixel of two same-shape maps.
fn pixel_distances(a: &FeatureMap, b: &FeatureMap) -> Vec<f64> {
    let n = a.plane_len();
    let mut norm_a = vec![0.0f64; n];
    let mut norm_b = vec![0.0f64; n];
    for c in 0..a.channels() {
        for p in 0..n {
            norm_a[p] += (a.plane(c)[p] as f64).powi(2);
            norm_b[p] += (b.plane(c)[p] as f64).powi(2);
        }
    }
    let inv = |s: f64| 1.0 / (s.sqrt() + NORM_EPS);
    let (ia, ib): (Vec<f64>, Vec<f64>) = norm_a.iter().zip(&norm_b).map(|(&x, &y)| (inv(x), inv(y))).unzip();
    let mut d = vec![0.0f64; n];
    for c in 0..a.channels() {
        for p in 0..n {
            let diff = a.plane(c)[p] as f64 * ia[p] - b.plane(c)[p] as f64 * ib[p];
            d[p] += diff * diff;
        }
    }
    d
}

/// Fraction of each `factor`×`factor` block covered by `mask`.
fn block_coverage(mask: &[bool], (h, w): (usize, usize), factor: usize) -> Result<Vec<f64>> {
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::dim(format!(
            "{h}x{w} is not divisible by the layer stride {factor}"
        )));
    }
    let (bh, bw) = (h / factor, w / factor);
    let mut out = vec![0.0; bh * bw];
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] {
                out[(y / factor) * bw + x / factor] += 1.0;
            }
        }
    }
    Ok(out)
}

/// Perceptual distance: per layer, unit-normalise features along channels,
/// square the difference, average spatially; sum over layers with uniform
/// weights.
///
/// With a mask both images are zeroed outside it and each layer's average is
/// weighted by the mask's coverage of every feature cell, so the result does
/// not depend on pixels outside the region.
pub fn lpips_distance(
    x: &ImageTensor,
    y: &ImageTensor,
    extractor: &FeatureExtractor,
    mask: Option<&[bool]>,
) -> Result<f64> {
    if x.pixels.shape() != y.pixels.shape() || x.modality != y.modality {
        return Err(Error::dim(format!(
            "lpips inputs differ: {:?} vs {:?}",
            x.pixels.shape(),
            y.pixels.shape()
        )));
    }
    let dims = x.spatial_dims();
    let (px, py, weights) = match mask {
        None => (x.pixels.clone(), y.pixels.clone(), None),
        Some(m) => {
            if m.len() != dims.0 * dims.1 {
                return Err(Error::dim(format!(
                    "mask has {} pixels, image is {}x{}",
                    m.len(),
                    dims.0,
                    dims.1
                )));
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::invalid("lpips mask is empty"));
            }
            let apply = |f: &FeatureMap| {
                let mut out = f.clone();
                for c in 0..out.channels() {
                    for (v, &keep) in out.plane_mut(c).iter_mut().zip(m) {
                        if !keep {
                            *v = 0.0;
                        }
                    }
                }
                out
            };
            let weights = extractor
                .strides()
                .into_iter()
                .map(|s| block_coverage(m, dims, s))
                .collect::<Result<Vec<_>>>()?;
            (apply(&x.pixels), apply(&y.pixels), Some(weights))
        }
    };
    let fx = extractor.features_of(&px)?;
    let fy = extractor.features_of(&py)?;
    let mut total = 0.0;
    for (l, (a, b)) in fx.iter().zip(&fy).enumerate() {
        let d = pixel_distances(a, b);
        total += match &weights {
            None => d.iter().sum::<f64>() / d.len() as f64,
            Some(w) => {
                let w = &w[l];
                if w.len() != d.len() {
                    return Err(Error::dim("layer resolution does not match the mask blocks"));
                }
                d.iter().zip(w).map(|(d, w)| d * w).sum::<f64>() / w.iter().sum::<f64>()
            }
        };
    }
    Ok(total)
}
