use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Scalar};

/// A pixel-level partition of an image into `K` components.
///
/// Stored as a label image; the one-hot `H × W × K` view is available through
/// [`ComponentMask::from_one_hot`] and [`ComponentMask::one_hot`]. Every pixel
/// belongs to exactly one component by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentMask {
    height: usize,
    width: usize,
    num_components: usize,
    labels: Vec<u16>,
}

impl ComponentMask {
    pub fn new(height: usize, width: usize, num_components: usize, labels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim(format!("mask dims must be >= 1, got {height}x{width}")));
        }
        if num_components == 0 || num_components > u16::MAX as usize {
            return Err(Error::invalid(format!("invalid component count {num_components}")));
        }
        if labels.len() != height * width {
            return Err(Error::dim(format!(
                "mask of {height}x{width} needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_components) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_components} components"
            )));
        }
        Ok(Self {
            height,
            width,
            num_components,
            labels,
        })
    }

    pub fn uniform(height: usize, width: usize, num_components: usize, component: usize) -> Self {
        assert!(component < num_components);
        Self::new(height, width, num_components, vec![component as u16; height * width]).expect("uniform mask is valid")
    }

    /// Builds a mask from an `H × W × K` one-hot array (component index fastest).
    pub fn from_one_hot<T: Scalar>(height: usize, width: usize, num_components: usize, data: &[T]) -> Result<Self> {
        if data.len() != height * width * num_components {
            return Err(Error::dim(format!(
                "one-hot mask {height}x{width}x{num_components} needs {} values, got {}",
                height * width * num_components,
                data.len()
            )));
        }
        let mut labels = Vec::with_capacity(height * width);
        for (p, pixel) in data.chunks(num_components.max(1)).enumerate() {
            let mut label = None;
            for (k, &v) in pixel.iter().enumerate() {
                if v == T::one() {
                    if label.is_some() {
                        return Err(Error::invalid(format!("pixel {p} belongs to more than one component")));
                    }
                    label = Some(k as u16);
                } else if v != T::zero() {
                    return Err(Error::invalid(format!(
                        "mask entries must be 0 or 1, found {v:?} at pixel {p}"
                    )));
                }
            }
            match label {
                Some(l) => labels.push(l),
                None => {
                    return Err(Error::invalid(format!("pixel {p} belongs to no component")));
                }
            }
        }
        Self::new(height, width, num_components, labels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spatial_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_components];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn contains(&self, component: usize) -> bool {
        self.labels.iter().any(|&l| l as usize == component)
    }

    /// Binary membership image of one component.
    pub fn component(&self, component: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| l as usize == component).collect()
    }

    /// `K` one-hot channels, suitable for concatenation with an image.
    pub fn one_hot<T: Scalar>(&self) -> FeatureMap<T> {
        FeatureMap::from_fn(self.num_components, self.height, self.width, |k, y, x| {
            if self.label(y, x) == k {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    /// Fraction of each `factor × factor` block covered by `component`, laid
    /// out on the `(H / factor) × (W / factor)` grid.
    pub fn coverage(&self, component: usize, factor: usize) -> Result<Vec<f32>> {
        if factor == 0 || !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "coverage factor {factor} does not divide {}x{}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let mut out = vec![0.0f32; h * w];
        let norm = 1.0 / (factor * factor) as f32;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.label(y, x) == component {
                    out[(y / factor) * w + x / factor] += norm;
                }
            }
        }
        Ok(out)
    }

    /// Chebyshev dilation of one component's region by `radius` pixels.
    pub fn dilate(&self, component: usize, radius: usize) -> Vec<bool> {
        let src = self.component(component);
        let (h, w) = (self.height, self.width);
        // separable max filter: rows then columns
        let mut rows = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                rows[y * w + x] = (lo..=hi).any(|xx| src[y * w + xx]);
            }
        }
        let mut out = vec![false; h * w];
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            for x in 0..w {
                out[y * w + x] = (lo..=hi).any(|yy| rows[yy * w + x]);
            }
        }
        out
    }
}

/// Nearest-neighbour resampling of a label image: output pixel `(y, x)` takes
/// the label at `(floor(y * H / H'), floor(x * W / W'))`.
pub fn resize_labels_nearest(
    labels: &[u16],
    (height, width): (usize, usize),
    (out_h, out_w): (usize, usize),
) -> Vec<u16> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = y * height / out_h;
        for x in 0..out_w {
            let sx = x * width / out_w;
            out.push(labels[sy * width + sx]);
        }
    }
    out
}

/// Brings a mask down to feature resolution. Each output pixel takes the label
/// of the top-left pixel of its block, so the result is still a partition.
pub fn downsample_mask(mask: &ComponentMask, target: (usize, usize)) -> Result<ComponentMask> {
    let (h, w) = mask.spatial_dims();
    let (th, tw) = target;
    if th == 0 || tw == 0 || th > h || tw > w {
        return Err(Error::invalid(format!("cannot downsample {h}x{w} mask to {th}x{tw}")));
    }
    if h % th != 0 || w % tw != 0 {
        return Err(Error::invalid(format!(
            "non-integral downsampling ratio from {h}x{w} to {th}x{tw}"
        )));
    }
    if (th, tw) == (h, w) {
        return Ok(mask.clone());
    }
    let labels = resize_labels_nearest(mask.labels(), (h, w), (th, tw));
    ComponentMask::new(th, tw, mask.num_components(), labels)
}
