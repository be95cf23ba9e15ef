//! Multimodal unpaired RGB-to-thermal translation with component-aware
//! adaptive instance normalization (CoAdaIN).
//!
//! The crate is organised bottom-up: [`coadain`] holds the masked statistics
//! and the normalization transform, [`nn`] a small layer library with manual
//! gradients, [`nets`] the encoders, generators and discriminators,
//! [`objectives`] the training losses, [`trainer`] the optimisation loop and
//! checkpoints, [`datasets`] ingestion and synthetic scenes, and [`metrics`]
//! the LPIPS-style diversity and Fréchet distance protocols.

pub mod coadain;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{FeatureMap, ImageTensor, Modality, Scalar};
