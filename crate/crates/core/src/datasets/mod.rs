//! Dataset ingestion, preprocessing, synthetic scenes and batch ordering.
//!
//! On disk a dataset is `root/{rgb,thermal,seg}/<stem>.png` (optionally under
//! a `train/` or `test/` split directory): 8-bit RGB, 16-bit single-channel
//! thermal and 8-bit segmentation labels.

mod batch;
mod manifest;
mod preprocess;
mod synthetic;

pub use batch::BatchOrder;
pub use manifest::{scan_dataset, DatasetManifest, LabelMap, ManifestEntry, ScanReport, Split};
pub use preprocess::{
    load_samples, preprocess, preprocess_rgb, read_entry, thermal_to_raw, PreprocessConfig, RawTriple, ThermalImage,
};
pub use synthetic::{
    generate_synthetic_scene, random_scene_spec, write_synthetic_dataset, SceneSpec, SyntheticManifest, Vehicle,
    BACKGROUND_LABEL, SYNTHETIC_SIZE, VEHICLE_LABEL,
};

use crate::coadain::ComponentMask;
use crate::tensor::{ImageTensor, Modality};

/// One aligned scene after preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub stem: String,
    pub rgb: ImageTensor,
    pub thermal: ImageTensor,
    pub mask: ComponentMask,
}

impl Sample {
    pub fn image(&self, modality: Modality) -> &ImageTensor {
        match modality {
            Modality::Rgb => &self.rgb,
            Modality::Thermal => &self.thermal,
        }
    }
}
