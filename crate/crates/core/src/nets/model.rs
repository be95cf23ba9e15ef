use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::content::{check_inputs, ContentCode, ContentEncoder};
use super::discriminator::MultiScaleDiscriminator;
use super::generator::{Generator, GeneratorTrace};
use super::style::StyleEncoderBank;
use crate::coadain::{ComponentMask, StyleCode, StyleCodeSet};
use crate::error::{Error, Result};
use crate::impl_parameters;
use crate::nn::{join, Param, Parameters};
use crate::tensor::{FeatureMap, ImageTensor, Modality};

/// Encoders, generator and discriminator of one modality.
#[derive(Clone, Debug)]
pub struct ModalityNets {
    pub modality: Modality,
    pub content: ContentEncoder,
    pub style: StyleEncoderBank,
    pub generator: Generator,
    pub discriminator: MultiScaleDiscriminator,
}

impl_parameters!(ModalityNets {
    content,
    style,
    generator,
    discriminator
});

impl ModalityNets {
    fn new<R: Rng + ?Sized>(config: &ModelConfig, modality: Modality, rng: &mut R) -> Self {
        Self {
            modality,
            content: ContentEncoder::new(config, modality, rng),
            style: StyleEncoderBank::new(config, modality, rng),
            generator: Generator::new(config, modality, rng),
            discriminator: MultiScaleDiscriminator::new(config, modality, rng),
        }
    }
}

/// Which optimizer a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    /// Content encoders, style encoders, generators and their heads.
    Generator,
    Discriminator,
}

/// The full bidirectional model: modality `a` (RGB) and `b` (thermal).
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub rgb: ModalityNets,
    pub thermal: ModalityNets,
}

impl_parameters!(Model { rgb, thermal });

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rgb = ModalityNets::new(&config, Modality::Rgb, &mut rng);
        let thermal = ModalityNets::new(&config, Modality::Thermal, &mut rng);
        Ok(Self { config, rgb, thermal })
    }

    pub fn nets(&self, modality: Modality) -> &ModalityNets {
        match modality {
            Modality::Rgb => &self.rgb,
            Modality::Thermal => &self.thermal,
        }
    }

    pub fn nets_mut(&mut self, modality: Modality) -> &mut ModalityNets {
        match modality {
            Modality::Rgb => &mut self.rgb,
            Modality::Thermal => &mut self.thermal,
        }
    }

    pub fn visit_group(&self, group: ParamGroup, f: &mut dyn FnMut(&str, &Param)) {
        for nets in [&self.rgb, &self.thermal] {
            let prefix = nets.modality.name();
            match group {
                ParamGroup::Generator => {
                    nets.content.visit(&join(prefix, "content"), f);
                    nets.style.visit(&join(prefix, "style"), f);
                    nets.generator.visit(&join(prefix, "generator"), f);
                }
                ParamGroup::Discriminator => nets.discriminator.visit(&join(prefix, "discriminator"), f),
            }
        }
    }

    pub fn visit_group_mut(&mut self, group: ParamGroup, f: &mut dyn FnMut(&str, &mut Param)) {
        for nets in [&mut self.rgb, &mut self.thermal] {
            let prefix = nets.modality.name();
            match group {
                ParamGroup::Generator => {
                    nets.content.visit_mut(&join(prefix, "content"), f);
                    nets.style.visit_mut(&join(prefix, "style"), f);
                    nets.generator.visit_mut(&join(prefix, "generator"), f);
                }
                ParamGroup::Discriminator => nets.discriminator.visit_mut(&join(prefix, "discriminator"), f),
            }
        }
    }

    pub fn sample_styles<R: Rng + ?Sized>(&self, rng: &mut R) -> StyleCodeSet {
        StyleCodeSet::sample(self.config.num_components, self.config.style_dim, rng)
    }

    pub fn encode_content(&self, image: &ImageTensor, mask: &ComponentMask) -> Result<ContentCode> {
        check_inputs(&self.config, image, mask, image.modality)?;
        self.nets(image.modality).content.forward(image, mask)
    }

    pub fn encode_style(&self, image: &ImageTensor, mask: &ComponentMask, component: usize) -> Result<StyleCode> {
        check_inputs(&self.config, image, mask, image.modality)?;
        self.nets(image.modality).style.encode(image, mask, component)
    }

    pub fn encode_styles(&self, image: &ImageTensor, mask: &ComponentMask) -> Result<StyleCodeSet> {
        check_inputs(&self.config, image, mask, image.modality)?;
        self.nets(image.modality).style.encode_all(image, mask)
    }

    fn check_decode(&self, content: &ContentCode, mask: &ComponentMask) -> Result<()> {
        if mask.spatial_dims() != self.config.image_size {
            return Err(Error::dim(format!(
                "decode expects a full-resolution mask {:?}, got {:?}",
                self.config.image_size,
                mask.spatial_dims()
            )));
        }
        if content.spatial_dims() != self.config.content_size() {
            return Err(Error::dim(format!(
                "content code is {:?}, expected {:?}",
                content.spatial_dims(),
                self.config.content_size()
            )));
        }
        Ok(())
    }

    pub fn decode(
        &self,
        content: &ContentCode,
        mask: &ComponentMask,
        styles: &StyleCodeSet,
        modality: Modality,
    ) -> Result<ImageTensor> {
        self.check_decode(content, mask)?;
        self.nets(modality).generator.forward(content, mask, styles)
    }

    /// Decode that also records every CoAdaIN layer's input and output.
    pub fn decode_traced(
        &self,
        content: &ContentCode,
        mask: &ComponentMask,
        styles: &StyleCodeSet,
        modality: Modality,
    ) -> Result<(ImageTensor, GeneratorTrace)> {
        self.check_decode(content, mask)?;
        self.nets(modality).generator.forward_traced(content, mask, styles)
    }

    pub fn discriminate(&self, image: &ImageTensor) -> Result<Vec<FeatureMap>> {
        self.nets(image.modality).discriminator.forward(image)
    }

    /// Content of `image` rendered in the other modality with `styles`.
    pub fn translate(&self, image: &ImageTensor, mask: &ComponentMask, styles: &StyleCodeSet) -> Result<ImageTensor> {
        let content = self.encode_content(image, mask)?;
        self.decode(&content, mask, styles, image.modality.other())
    }

    /// Encodes content and styles of `image` and decodes them in its own modality.
    pub fn reconstruct(&self, image: &ImageTensor, mask: &ComponentMask) -> Result<ImageTensor> {
        let content = self.encode_content(image, mask)?;
        let styles = self.encode_styles(image, mask)?;
        self.decode(&content, mask, &styles, image.modality)
    }
}
