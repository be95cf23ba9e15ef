//! Evaluation: LPIPS-style perceptual distance, Fréchet distance between
//! embedding distributions, and the diversity and FID protocols built on a
//! pluggable feature extractor.

mod extractor;
mod frechet;
mod lpips;
mod protocols;

pub use extractor::{ExtractorDescriptor, FeatureExtractor, DEFAULT_EXTRACTOR_SEED};
pub use frechet::{activation_stats, frechet_distance, ActivationStats, StatsAccumulator};
pub use lpips::lpips_distance;
pub use protocols::{
    diversity_protocol, fid_protocol, DiversityConfig, DiversityMode, FidConfig, ProtocolCounters, ProtocolReport,
    RealThermal, Translator,
};
