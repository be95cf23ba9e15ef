//! Encoders, generators and discriminators of the two modality streams.

mod blocks;
mod config;
mod content;
mod discriminator;
mod generator;
mod model;
mod style;

pub use blocks::{Activation, ConvBlock, ResBlock};
pub use config::ModelConfig;
pub(crate) use content::check_inputs;
pub use content::{ContentCache, ContentCode, ContentEncoder};
pub use discriminator::{DiscriminatorCache, MultiScaleDiscriminator, PatchDiscriminator};
pub use generator::{CoAdaResBlock, Generator, GeneratorCache, GeneratorTrace};
pub use model::{ModalityNets, Model, ParamGroup};
pub use style::{StyleCache, StyleEncoder, StyleEncoderBank};
