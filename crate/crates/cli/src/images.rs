use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use coadain::datasets::{thermal_to_raw, PreprocessConfig, ThermalImage};
use coadain::ImageTensor;
use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

pub fn write_thermal_png(img: &ImageTensor, cfg: &PreprocessConfig, path: &Path) -> Result<()> {
    let (h, w) = img.spatial_dims();
    let out: ThermalImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([thermal_to_raw(img.pixels.get(0, y as usize, x as usize), cfg)])
    });
    out.save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_rgb_png(img: &ImageTensor, path: &Path) -> Result<()> {
    let (h, w) = img.spatial_dims();
    let to_u8 = |v: f32| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
    let out = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        Rgb([0, 1, 2].map(|c| to_u8(img.pixels.get(c, y as usize, x as usize))))
    });
    out.save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn open_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .with_context(|| format!("cannot read {}", path.display()))?
        .into_rgb8())
}

pub fn open_gray(path: &Path) -> Result<GrayImage> {
    Ok(image::open(path)
        .with_context(|| format!("cannot read {}", path.display()))?
        .into_luma8())
}

/// Sorted PNG files of a directory; empty when it does not exist.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}
