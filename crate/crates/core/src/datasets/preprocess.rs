use image::imageops::{self, FilterType};
use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, LabelMap, ManifestEntry};
use super::Sample;
use crate::coadain::{resize_labels_nearest, ComponentMask};
use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, ImageTensor, Modality};

pub type ThermalImage = ImageBuffer<Luma<u16>, Vec<u16>>;

/// Target geometry and the fixed dataset-level thermal range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// `(height, width)` after resizing.
    pub image_size: (usize, usize),
    /// Raw 16-bit thermal value mapped to -1.
    pub thermal_min: f32,
    /// Raw 16-bit thermal value mapped to +1.
    pub thermal_max: f32,
    pub label_map: LabelMap,
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::invalid("image_size must be positive"));
        }
        if !(self.thermal_min.is_finite() && self.thermal_max.is_finite() && self.thermal_max > self.thermal_min) {
            return Err(Error::invalid(format!(
                "thermal range [{}, {}] is not increasing",
                self.thermal_min, self.thermal_max
            )));
        }
        Ok(())
    }
}

/// Decoded files of one manifest entry.
#[derive(Clone, Debug)]
pub struct RawTriple {
    pub rgb: RgbImage,
    pub thermal: ThermalImage,
    pub seg: GrayImage,
}

fn open(path: &std::path::Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_entry(entry: &ManifestEntry) -> Result<RawTriple> {
    Ok(RawTriple {
        rgb: open(&entry.rgb)?.into_rgb8(),
        thermal: open(&entry.thermal)?.into_luma16(),
        seg: open(&entry.seg)?.into_luma8(),
    })
}

fn check_dims(what: &[(&str, (u32, u32))]) -> Result<()> {
    if what.iter().all(|(_, d)| *d == what[0].1) {
        return Ok(());
    }
    let listed: Vec<String> = what.iter().map(|(n, d)| format!("{n} {d:?}")).collect();
    Err(Error::invalid(format!("{} differ in size", listed.join(", "))))
}

// the float resize clamps to [0, 1], so resampling happens in unit range
fn resize_unit<P>(img: ImageBuffer<P, Vec<f32>>, (h, w): (usize, usize)) -> ImageBuffer<P, Vec<f32>>
where
    P: image::Pixel<Subpixel = f32> + 'static,
{
    if img.dimensions() == (w as u32, h as u32) {
        img
    } else {
        imageops::resize(&img, w as u32, h as u32, FilterType::Triangle)
    }
}

fn rgb_tensor(rgb: &RgbImage, size: (usize, usize)) -> Result<ImageTensor> {
    let (src_w, src_h) = rgb.dimensions();
    let unit: ImageBuffer<Rgb<f32>, Vec<f32>> = ImageBuffer::from_fn(src_w, src_h, |x, y| {
        Rgb(rgb.get_pixel(x, y).0.map(|v| f32::from(v) / 255.0))
    });
    let unit = resize_unit(unit, size);
    let px = FeatureMap::from_fn(3, size.0, size.1, |c, y, x| {
        (2.0 * unit.get_pixel(x as u32, y as u32).0[c] - 1.0).clamp(-1.0, 1.0)
    });
    ImageTensor::new(Modality::Rgb, px)
}

fn thermal_tensor(thermal: &ThermalImage, cfg: &PreprocessConfig) -> Result<ImageTensor> {
    let (src_w, src_h) = thermal.dimensions();
    let unit: ImageBuffer<Luma<f32>, Vec<f32>> = ImageBuffer::from_fn(src_w, src_h, |x, y| {
        Luma([f32::from(thermal.get_pixel(x, y).0[0]) / 65535.0])
    });
    let unit = resize_unit(unit, cfg.image_size);
    let span = cfg.thermal_max - cfg.thermal_min;
    let px = FeatureMap::from_fn(1, cfg.image_size.0, cfg.image_size.1, |_, y, x| {
        let v = unit.get_pixel(x as u32, y as u32).0[0] * 65535.0;
        (2.0 * (v - cfg.thermal_min) / span - 1.0).clamp(-1.0, 1.0)
    });
    ImageTensor::new(Modality::Thermal, px)
}

fn seg_mask(seg: &GrayImage, cfg: &PreprocessConfig) -> Result<ComponentMask> {
    let (src_w, src_h) = seg.dimensions();
    let (h, w) = cfg.image_size;
    let labels: Vec<u16> = seg.as_raw().iter().map(|&l| u16::from(l)).collect();
    let resized = resize_labels_nearest(&labels, (src_h as usize, src_w as usize), (h, w));
    let ids: Vec<u8> = resized.into_iter().map(|l| l as u8).collect();
    ComponentMask::new(h, w, cfg.label_map.num_components(), cfg.label_map.map_labels(&ids)?)
}

/// Bilinear resize of both images, normalization to [-1, 1] and
/// nearest-neighbour resize of the labels followed by the label map.
pub fn preprocess(raw: &RawTriple, cfg: &PreprocessConfig) -> Result<(ImageTensor, ImageTensor, ComponentMask)> {
    cfg.validate()?;
    check_dims(&[
        ("rgb", raw.rgb.dimensions()),
        ("thermal", raw.thermal.dimensions()),
        ("seg", raw.seg.dimensions()),
    ])?;
    Ok((
        rgb_tensor(&raw.rgb, cfg.image_size)?,
        thermal_tensor(&raw.thermal, cfg)?,
        seg_mask(&raw.seg, cfg)?,
    ))
}

/// As [`preprocess`] for an RGB image and its segmentation alone.
pub fn preprocess_rgb(rgb: &RgbImage, seg: &GrayImage, cfg: &PreprocessConfig) -> Result<(ImageTensor, ComponentMask)> {
    cfg.validate()?;
    check_dims(&[("rgb", rgb.dimensions()), ("seg", seg.dimensions())])?;
    Ok((rgb_tensor(rgb, cfg.image_size)?, seg_mask(seg, cfg)?))
}

/// Inverse of the thermal normalization: a [-1, 1] value to a raw 16-bit level.
pub fn thermal_to_raw(value: f32, cfg: &PreprocessConfig) -> u16 {
    let v = cfg.thermal_min + (value.clamp(-1.0, 1.0) + 1.0) * 0.5 * (cfg.thermal_max - cfg.thermal_min);
    v.round().clamp(0.0, 65535.0) as u16
}

/// Reads and preprocesses every manifest entry, in manifest order.
pub fn load_samples(manifest: &DatasetManifest, cfg: &PreprocessConfig) -> Result<Vec<Sample>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let (rgb, thermal, mask) = preprocess(&read_entry(e)?, cfg)?;
            Ok(Sample {
                stem: e.stem.clone(),
                rgb,
                thermal,
                mask,
            })
        })
        .collect()
}
