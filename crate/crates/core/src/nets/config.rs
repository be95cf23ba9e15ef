use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyper-parameters shared by both modality streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_components: usize,
    pub style_dim: usize,
    pub content_channels: usize,
    pub base_filters: usize,
    pub num_downsamples: usize,
    /// Residual blocks in the content encoder and in the generator.
    pub num_res_blocks: usize,
    /// `(height, width)`.
    pub image_size: (usize, usize),
    pub rgb_channels: usize,
    pub thermal_channels: usize,
    pub discriminator_scales: usize,
    pub discriminator_filters: usize,
    /// Hidden width of the per-component parameter heads.
    pub mlp_dim: usize,
    pub upsample_kernel: usize,
    /// Restrict the generator's residual convolutions to taps of the output
    /// pixel's own component, so styles stay local between CoAdaIN layers.
    pub gated_residual_convs: bool,
    /// Component that holds vehicles (the component of interest).
    pub vehicle_component: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_components: 2,
            style_dim: 8,
            content_channels: 256,
            base_filters: 64,
            num_downsamples: 2,
            num_res_blocks: 4,
            image_size: (256, 512),
            rgb_channels: 3,
            thermal_channels: 1,
            discriminator_scales: 3,
            discriminator_filters: 64,
            mlp_dim: 256,
            upsample_kernel: 5,
            gated_residual_convs: true,
            vehicle_component: 0,
        }
    }
}

impl ModelConfig {
    /// Reduced configuration for 64×128 synthetic scenes on a CPU.
    pub fn desk() -> Self {
        Self {
            content_channels: 32,
            base_filters: 8,
            num_res_blocks: 2,
            image_size: (64, 128),
            discriminator_filters: 8,
            mlp_dim: 32,
            upsample_kernel: 3,
            ..Self::default()
        }
    }

    pub fn downsample_factor(&self) -> usize {
        1 << self.num_downsamples
    }

    pub fn content_size(&self) -> (usize, usize) {
        let f = self.downsample_factor();
        (self.image_size.0 / f, self.image_size.1 / f)
    }

    /// Number of CoAdaIN layers in each generator.
    pub fn coadain_layers(&self) -> usize {
        2 * self.num_res_blocks
    }

    /// Channel width after each encoder downsampling step; the last equals
    /// `content_channels`.
    pub fn encoder_widths(&self) -> Vec<usize> {
        (1..=self.num_downsamples)
            .map(|i| {
                if i == self.num_downsamples {
                    self.content_channels
                } else {
                    self.base_filters << i
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("num_components", self.num_components),
            ("style_dim", self.style_dim),
            ("content_channels", self.content_channels),
            ("base_filters", self.base_filters),
            ("num_downsamples", self.num_downsamples),
            ("discriminator_scales", self.discriminator_scales),
            ("discriminator_filters", self.discriminator_filters),
            ("mlp_dim", self.mlp_dim),
            ("upsample_kernel", self.upsample_kernel),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if self.rgb_channels != 3 {
            problems.push(format!("rgb_channels must be 3, got {}", self.rgb_channels));
        }
        if self.thermal_channels != 1 {
            problems.push(format!("thermal_channels must be 1, got {}", self.thermal_channels));
        }
        if self.upsample_kernel.is_multiple_of(2) {
            problems.push("upsample_kernel must be odd".to_string());
        }
        if self.vehicle_component >= self.num_components.max(1) {
            problems.push(format!(
                "vehicle_component {} out of range for {} components",
                self.vehicle_component, self.num_components
            ));
        }
        let (h, w) = self.image_size;
        let f = 1usize << self.num_downsamples.min(16);
        if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
            problems.push(format!("image_size {h}x{w} not divisible by 2^num_downsamples = {f}"));
        }
        let d = 1usize << (self.discriminator_scales.saturating_sub(1) + 3).min(30);
        if h % d != 0 || w % d != 0 {
            problems.push(format!(
                "image_size {h}x{w} not divisible by {d} as required by {} discriminator scales",
                self.discriminator_scales
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::desk().validate().unwrap();
        assert_eq!(ModelConfig::default().content_size(), (64, 128));
        assert_eq!(ModelConfig::desk().encoder_widths(), vec![16, 32]);
    }

    #[test]
    fn reports_every_problem() {
        let cfg = ModelConfig {
            style_dim: 0,
            image_size: (30, 64),
            ..ModelConfig::desk()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("style_dim"));
        assert!(msg.contains("image_size"));
    }
}
