//! Dense feature maps and modality-tagged images.
//!
//! Feature maps are stored channel-planar (`C × H × W`, row-major within a
//! plane). Every operation that talks about "the pixel (y, x) of channel c"
//! indexes `data[c * H * W + y * W + x]`.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating point element type accepted by the generic numeric kernels.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static {}

#[inline]
pub(crate) fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 is representable in every Scalar")
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T = f32> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::dim(format!(
                "feature map dims must be >= 1, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::dim(format!(
                "expected {} values for {channels}x{height}x{width}, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty feature map");
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty feature map");
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
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

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: T) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!("{what}: {:?} vs {:?}", self.shape(), other.shape())))
        }
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(what.to_string()))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other, "elementwise operands")?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            channels: self.channels,
            height: self.height,
            width: self.width,
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMap<U> {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
                .collect(),
        }
    }

    /// Stacks the channels of `self` followed by the channels of `other`.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        if self.spatial_dims() != other.spatial_dims() {
            return Err(Error::dim(format!(
                "cannot concatenate {:?} with {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Keeps the first `channels` channels.
    pub fn leading_channels(&self, channels: usize) -> Self {
        assert!(channels >= 1 && channels <= self.channels);
        Self {
            channels,
            height: self.height,
            width: self.width,
            data: self.data[..channels * self.plane_len()].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    /// Modality `a`.
    Rgb,
    /// Modality `b`.
    Thermal,
}

impl Modality {
    pub fn channels(self) -> usize {
        match self {
            Modality::Rgb => 3,
            Modality::Thermal => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Modality::Rgb => Modality::Thermal,
            Modality::Thermal => Modality::Rgb,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Thermal => "thermal",
        }
    }
}

/// An image with values in `[-1, 1]` and a modality tag.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    pub modality: Modality,
    pub pixels: FeatureMap<f32>,
}

impl ImageTensor {
    pub fn new(modality: Modality, pixels: FeatureMap<f32>) -> Result<Self> {
        if pixels.channels() != modality.channels() {
            return Err(Error::invalid(format!(
                "{} image must have {} channels, got {}",
                modality.name(),
                modality.channels(),
                pixels.channels()
            )));
        }
        Ok(Self { modality, pixels })
    }

    pub fn spatial_dims(&self) -> (usize, usize) {
        self.pixels.spatial_dims()
    }

    pub fn channels(&self) -> usize {
        self.pixels.channels()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_channel_planar() {
        let fm = FeatureMap::<f32>::from_fn(2, 2, 3, |c, y, x| (c * 100 + y * 10 + x) as f32);
        assert_eq!(fm.get(1, 1, 2), 112.0);
        assert_eq!(fm.plane(1)[5], 112.0);
        assert_eq!(fm.data()[6], 100.0);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(FeatureMap::<f32>::new(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(FeatureMap::<f32>::new(0, 2, 2, vec![]).is_err());
    }

    #[test]
    fn image_channel_contract() {
        let fm = FeatureMap::<f32>::zeros(3, 2, 2);
        assert!(ImageTensor::new(Modality::Thermal, fm.clone()).is_err());
        assert!(ImageTensor::new(Modality::Rgb, fm).is_ok());
    }
}
