use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

pub fn upsample_nearest(x: &FeatureMap, factor: usize) -> FeatureMap {
    FeatureMap::from_fn(x.channels(), x.height() * factor, x.width() * factor, |c, y, xx| {
        x.get(c, y / factor, xx / factor)
    })
}

pub fn upsample_nearest_backward(grad: &FeatureMap, factor: usize) -> FeatureMap {
    let (c, h, w) = grad.shape();
    let mut out = FeatureMap::zeros(c, h / factor, w / factor);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = out.get(ch, y / factor, x / factor) + grad.get(ch, y, x);
                out.set(ch, y / factor, x / factor, v);
            }
        }
    }
    out
}

/// Non-overlapping mean pooling over `factor × factor` blocks.
pub fn avg_pool(x: &FeatureMap, factor: usize) -> Result<FeatureMap> {
    let (c, h, w) = x.shape();
    if h % factor != 0 || w % factor != 0 || h < factor || w < factor {
        return Err(Error::dim(format!("cannot pool {h}x{w} by {factor}")));
    }
    let norm = 1.0 / (factor * factor) as f32;
    let mut out = FeatureMap::zeros(c, h / factor, w / factor);
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let v = out.get(ch, y / factor, xx / factor) + x.get(ch, y, xx) * norm;
                out.set(ch, y / factor, xx / factor, v);
            }
        }
    }
    Ok(out)
}

pub fn avg_pool_backward(grad: &FeatureMap, factor: usize) -> FeatureMap {
    let norm = 1.0 / (factor * factor) as f32;
    FeatureMap::from_fn(
        grad.channels(),
        grad.height() * factor,
        grad.width() * factor,
        |c, y, x| grad.get(c, y / factor, x / factor) * norm,
    )
}
