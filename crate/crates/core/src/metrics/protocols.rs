use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::extractor::{ExtractorDescriptor, FeatureExtractor};
use super::frechet::{activation_stats, frechet_distance, StatsAccumulator};
use super::lpips::lpips_distance;
use crate::coadain::{StyleCode, StyleCodeSet};
use crate::datasets::Sample;
use crate::error::{Error, Result};
use crate::nets::Model;
use crate::tensor::ImageTensor;

/// Anything that renders a source scene in the target modality under a style
/// set. The trained model is the main implementation; tests plug in
/// degenerate ones.
pub trait Translator {
    /// `(num_components, style_dim)` of the style sets it accepts.
    fn style_shape(&self) -> (usize, usize);
    fn translate(&self, source: &Sample, styles: &StyleCodeSet) -> Result<ImageTensor>;
}

impl Translator for Model {
    fn style_shape(&self) -> (usize, usize) {
        (self.config.num_components, self.config.style_dim)
    }

    fn translate(&self, source: &Sample, styles: &StyleCodeSet) -> Result<ImageTensor> {
        Model::translate(self, &source.rgb, &source.mask, styles)
    }
}

/// Returns each source's own thermal image, ignoring the styles.
#[derive(Clone, Copy, Debug)]
pub struct RealThermal {
    pub style_shape: (usize, usize),
}

impl Translator for RealThermal {
    fn style_shape(&self) -> (usize, usize) {
        self.style_shape
    }

    fn translate(&self, source: &Sample, _styles: &StyleCodeSet) -> Result<ImageTensor> {
        Ok(source.thermal.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiversityMode {
    /// Every style code is resampled; distance over the whole image.
    All,
    /// Only the vehicle code is resampled; distance over the vehicle region.
    VehicleOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiversityConfig {
    pub num_sources: usize,
    pub num_pairs: usize,
    pub seed: u64,
    pub vehicle_component: usize,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self {
            num_sources: 100,
            num_pairs: 1000,
            seed: 0,
            vehicle_component: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FidConfig {
    pub samplings: usize,
    pub seed: u64,
}

impl Default for FidConfig {
    fn default() -> Self {
        Self { samplings: 3, seed: 0 }
    }
}

/// Work actually performed by a protocol run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolCounters {
    pub sources: usize,
    pub translations: usize,
    pub pair_evaluations: usize,
    pub sampling_passes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: String,
    pub seed: u64,
    pub extractor: ExtractorDescriptor,
    pub counters: ProtocolCounters,
    pub mean: f64,
    /// Population standard deviation over pairs or passes.
    pub std: f64,
    /// Per-pair distances or per-pass FIDs.
    pub values: Vec<f64>,
}

const CSV_HEADER: &str = "protocol,seed,extractor,extractor_hash,sources,translations,pairs,passes,mean,std";

impl ProtocolReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Appends one row, writing the header first when the file is new.
    pub fn append_csv(&self, path: &Path) -> Result<()> {
        let fresh = !path.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let c = &self.counters;
        let mut text = String::new();
        if fresh {
            text.push_str(CSV_HEADER);
            text.push('\n');
        }
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            self.protocol,
            self.seed,
            self.extractor.name,
            self.extractor.weights_hash,
            c.sources,
            c.translations,
            c.pair_evaluations,
            c.sampling_passes,
            self.mean,
            self.std
        ));
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Average perceptual distance between pairs of translations of the same
/// source under independently sampled styles.
///
/// Pair `j` uses source `j mod num_sources`. In vehicle-only mode the two
/// style sets share every code except the vehicle one, and the distance is
/// restricted to the vehicle region; sources without vehicles are rejected.
pub fn diversity_protocol(
    translator: &dyn Translator,
    sources: &[Sample],
    extractor: &FeatureExtractor,
    mode: DiversityMode,
    config: &DiversityConfig,
) -> Result<ProtocolReport> {
    if config.num_sources == 0 || config.num_pairs == 0 {
        return Err(Error::invalid(
            "diversity protocol needs at least one source and one pair",
        ));
    }
    if sources.len() < config.num_sources {
        return Err(Error::invalid(format!(
            "diversity protocol requested {} source images but only {} were given",
            config.num_sources,
            sources.len()
        )));
    }
    let sources = &sources[..config.num_sources];
    let (k, d) = translator.style_shape();
    if mode == DiversityMode::VehicleOnly {
        if config.vehicle_component >= k {
            return Err(Error::invalid("vehicle component out of range"));
        }
        if let Some(s) = sources.iter().find(|s| !s.mask.contains(config.vehicle_component)) {
            return Err(Error::invalid(format!("source {} has no vehicle pixels", s.stem)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut counters = ProtocolCounters {
        sources: sources.len(),
        ..Default::default()
    };
    let mut values = Vec::with_capacity(config.num_pairs);
    for j in 0..config.num_pairs {
        let source = &sources[j % sources.len()];
        let s1 = StyleCodeSet::sample(k, d, &mut rng);
        let s2 = match mode {
            DiversityMode::All => StyleCodeSet::sample(k, d, &mut rng),
            DiversityMode::VehicleOnly => s1.with_code(StyleCode::sample(config.vehicle_component, d, &mut rng))?,
        };
        let out1 = translator.translate(source, &s1)?;
        let out2 = translator.translate(source, &s2)?;
        counters.translations += 2;
        let region = match mode {
            DiversityMode::All => None,
            DiversityMode::VehicleOnly => Some(source.mask.component(config.vehicle_component)),
        };
        values.push(lpips_distance(&out1, &out2, extractor, region.as_deref())?);
        counters.pair_evaluations += 1;
    }
    let (mean, std) = mean_std(&values);
    let protocol = match mode {
        DiversityMode::All => "lpips",
        DiversityMode::VehicleOnly => "lpips-vehicle",
    };
    Ok(ProtocolReport {
        protocol: protocol.into(),
        seed: config.seed,
        extractor: extractor.descriptor().clone(),
        counters,
        mean,
        std,
        values,
    })
}

/// Fréchet distance between real thermal images of `test_set` and
/// translations of its RGB images, repeated with fresh styles for each pass.
pub fn fid_protocol(
    translator: &dyn Translator,
    test_set: &[Sample],
    extractor: &FeatureExtractor,
    config: &FidConfig,
) -> Result<ProtocolReport> {
    if test_set.is_empty() {
        return Err(Error::invalid("fid protocol needs a non-empty test set"));
    }
    if config.samplings == 0 {
        return Err(Error::invalid("fid protocol needs at least one sampling pass"));
    }
    let real = activation_stats(test_set.iter().map(|s| &s.thermal), extractor)?;
    let (k, d) = translator.style_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut counters = ProtocolCounters {
        sources: test_set.len(),
        ..Default::default()
    };
    let mut values = Vec::with_capacity(config.samplings);
    for _ in 0..config.samplings {
        let mut acc = StatsAccumulator::new(extractor.embedding_dim());
        for s in test_set {
            let styles = StyleCodeSet::sample(k, d, &mut rng);
            let fake = translator.translate(s, &styles)?;
            counters.translations += 1;
            acc.push(&extractor.embed(&fake)?)?;
        }
        values.push(frechet_distance(&acc.finish()?, &real)?);
        counters.sampling_passes += 1;
    }
    let (mean, std) = mean_std(&values);
    Ok(ProtocolReport {
        protocol: "fid".into(),
        seed: config.seed,
        extractor: extractor.descriptor().clone(),
        counters,
        mean,
        std,
        values,
    })
}
