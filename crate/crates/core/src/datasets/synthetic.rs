//! Toy street scenes: a sky/road backdrop with rectangular vehicles.
//!
//! RGB appearance depends on each vehicle's albedo and thermal appearance on
//! its temperature, so one RGB scene admits many thermal renderings.

use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::LabelMap;
use crate::coadain::ComponentMask;
use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, ImageTensor, Modality};

/// `(height, width)` of generated scenes.
pub const SYNTHETIC_SIZE: (usize, usize) = (64, 128);
pub const BACKGROUND_LABEL: u8 = 0;
pub const VEHICLE_LABEL: u8 = 1;
const VEHICLE_COMPONENT: u16 = 0;
const BACKGROUND_COMPONENT: u16 = 1;

/// Temperatures and albedos are proxies in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    pub temperature: f32,
    pub albedo: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub background_temperature: f32,
    pub vehicles: Vec<Vehicle>,
    /// Standard deviation of the additive thermal sensor noise.
    pub noise_level: f32,
    /// Drives the background texture and the noise pattern.
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f32| (0.0..=1.0).contains(&v);
        if self.height < 8 || self.width < 8 {
            return Err(Error::invalid("scene must be at least 8x8"));
        }
        if !unit(self.background_temperature) {
            return Err(Error::invalid("background temperature outside [0, 1]"));
        }
        if !(self.noise_level.is_finite() && self.noise_level >= 0.0) {
            return Err(Error::invalid("noise level must be nonnegative"));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.height == 0 || v.width == 0 || v.top + v.height > self.height || v.left + v.width > self.width {
                return Err(Error::invalid(format!("vehicle {i} lies outside the image")));
            }
            if !unit(v.temperature) || !unit(v.albedo) {
                return Err(Error::invalid(format!(
                    "vehicle {i} temperature or albedo outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    fn horizon(&self) -> usize {
        self.height * 3 / 8
    }
}

struct Texture {
    phase: [f32; 3],
}

impl Texture {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau = std::f32::consts::TAU;
        Self {
            phase: [
                rng.random::<f32>() * tau,
                rng.random::<f32>() * tau,
                rng.random::<f32>() * tau,
            ],
        }
    }

    /// Smooth pattern in [-1, 1].
    fn at(&self, y: usize, x: usize) -> f32 {
        let (y, x) = (y as f32, x as f32);
        0.5 * ((0.31 * x + self.phase[0]).sin() * (0.47 * y + self.phase[1]).sin()
            + (0.11 * x + 0.07 * y + self.phase[2]).sin())
    }
}

/// Renders a scene to RGB, thermal (both in [-1, 1]) and a two-component mask
/// with vehicles as component 0.
pub fn generate_synthetic_scene(spec: &SceneSpec) -> Result<(ImageTensor, ImageTensor, ComponentMask)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let horizon = spec.horizon();
    let tex = Texture::new(spec.seed);
    let bg_t = spec.background_temperature;

    let mut rgb = FeatureMap::zeros(3, h, w);
    let mut thermal = FeatureMap::zeros(1, h, w);
    let mut labels = vec![BACKGROUND_COMPONENT; h * w];
    for y in 0..h {
        for x in 0..w {
            let t = tex.at(y, x);
            let (color, temp) = if y < horizon {
                let f = y as f32 / horizon as f32;
                ([0.45 + 0.2 * f + 0.03 * t, 0.6 + 0.15 * f, 0.85], 0.4 * bg_t + 0.02 * t)
            } else {
                let lane = (y == (horizon + h) / 2) && (x / 8) % 2 == 0;
                let g = if lane { 0.8 } else { 0.35 + 0.06 * t };
                ([g, g, g * 1.05], bg_t + 0.05 * t)
            };
            for (c, v) in color.into_iter().enumerate() {
                rgb.set(c, y, x, v);
            }
            thermal.set(0, y, x, temp);
        }
    }
    for v in &spec.vehicles {
        let window_rows = v.height / 3;
        for y in v.top..v.top + v.height {
            let row = y - v.top;
            for x in v.left..v.left + v.width {
                let wheels = row + 2 >= v.height && ((x - v.left) < v.width / 4 || (x - v.left) >= v.width * 3 / 4);
                let (color, temp) = if wheels {
                    ([0.08, 0.08, 0.08], (v.temperature + 0.15).min(1.0))
                } else if row < window_rows {
                    ([0.4 * v.albedo, 0.45 * v.albedo, 0.5 * v.albedo], 0.7 * v.temperature)
                } else {
                    ([v.albedo, 0.85 * v.albedo, 0.8 * v.albedo], v.temperature)
                };
                for (c, val) in color.into_iter().enumerate() {
                    rgb.set(c, y, x, val);
                }
                thermal.set(0, y, x, temp);
                labels[y * w + x] = VEHICLE_COMPONENT;
            }
        }
    }
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);
    for t in thermal.data_mut() {
        let n: f32 = StandardNormal.sample(&mut noise_rng);
        *t = (*t + spec.noise_level * n).clamp(0.0, 1.0);
    }
    let to_signed = |v: f32| (2.0 * v - 1.0).clamp(-1.0, 1.0);
    Ok((
        ImageTensor::new(Modality::Rgb, rgb.map(to_signed))?,
        ImageTensor::new(Modality::Thermal, thermal.map(to_signed))?,
        ComponentMask::new(h, w, 2, labels)?,
    ))
}

/// A random but valid scene at the synthetic resolution.
pub fn random_scene_spec(seed: u64) -> SceneSpec {
    let (h, w) = SYNTHETIC_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = h * 3 / 8;
    let count = rng.random_range(1..=3);
    let vehicles = (0..count)
        .map(|_| {
            let height = rng.random_range(10..=20);
            let width = rng.random_range(18..=40);
            Vehicle {
                top: rng.random_range(horizon - 4..=h - height),
                left: rng.random_range(0..=w - width),
                height,
                width,
                temperature: rng.random_range(0.3..=1.0),
                albedo: rng.random_range(0.1..=0.9),
            }
        })
        .collect();
    SceneSpec {
        height: h,
        width: w,
        background_temperature: rng.random_range(0.15..=0.55),
        vehicles,
        noise_level: 0.02,
        seed: rng.next_u64(),
    }
}

/// Record written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub num_scenes: usize,
    pub seed: u64,
    pub image_size: (usize, usize),
    pub thermal_min: f32,
    pub thermal_max: f32,
    pub label_map: LabelMap,
    pub scenes: Vec<SceneSpec>,
}

fn save(path: &Path, result: image::ImageResult<()>) -> Result<()> {
    result.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn scene_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Writes `num_scenes` triples in the standard layout plus `manifest.json`.
pub fn write_synthetic_dataset(out_dir: &Path, num_scenes: usize, seed: u64) -> Result<SyntheticManifest> {
    if num_scenes == 0 {
        return Err(Error::invalid("num_scenes must be at least 1"));
    }
    let dirs: Vec<PathBuf> = ["rgb", "thermal", "seg"].iter().map(|d| out_dir.join(d)).collect();
    for d in &dirs {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut scenes = Vec::with_capacity(num_scenes);
    for i in 0..num_scenes {
        let spec = random_scene_spec(scene_seed(seed, i));
        let (rgb, thermal, mask) = generate_synthetic_scene(&spec)?;
        let (h, w) = (spec.height as u32, spec.width as u32);
        let name = format!("scene_{i:05}.png");
        let to_u8 = |v: f32| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8;
        let rgb_img = RgbImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as usize, y as usize);
            Rgb([0, 1, 2].map(|c| to_u8(rgb.pixels.get(c, y, x))))
        });
        let th_img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w, h, |x, y| {
            let v = thermal.pixels.get(0, y as usize, x as usize);
            Luma([((v + 1.0) * 0.5 * 65535.0).round().clamp(0.0, 65535.0) as u16])
        });
        let seg_img = GrayImage::from_fn(w, h, |x, y| {
            let c = mask.label(y as usize, x as usize) as u16;
            Luma([if c == VEHICLE_COMPONENT {
                VEHICLE_LABEL
            } else {
                BACKGROUND_LABEL
            }])
        });
        let p = dirs[0].join(&name);
        save(&p, rgb_img.save(&p))?;
        let p = dirs[1].join(&name);
        save(&p, th_img.save(&p))?;
        let p = dirs[2].join(&name);
        save(&p, seg_img.save(&p))?;
        scenes.push(spec);
    }
    let manifest = SyntheticManifest {
        num_scenes,
        seed,
        image_size: SYNTHETIC_SIZE,
        thermal_min: 0.0,
        thermal_max: 65535.0,
        label_map: LabelMap::synthetic(),
        scenes,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
