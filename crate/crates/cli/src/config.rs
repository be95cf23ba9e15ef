use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coadain::datasets::{LabelMap, PreprocessConfig};
use coadain::metrics::DEFAULT_EXTRACTOR_SEED;
use coadain::nets::ModelConfig;
use coadain::objectives::LossWeights;
use coadain::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

/// Overrides the directory under which `train` creates run directories.
pub const RUN_ROOT_ENV: &str = "COADAIN_RUN_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Dataset root for training; `<train>/train` is used when it exists.
    pub train: Option<PathBuf>,
    /// Dataset root for evaluation; `<test>/test` is used when it exists.
    pub test: Option<PathBuf>,
    /// Raw 16-bit thermal level mapped to -1.
    pub thermal_min: f32,
    /// Raw 16-bit thermal level mapped to +1.
    pub thermal_max: f32,
    pub label_map: LabelMap,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            thermal_min: 0.0,
            thermal_max: 65535.0,
            label_map: LabelMap::synthetic(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub num_sources: usize,
    pub num_pairs: usize,
    pub samplings: usize,
    pub seed: u64,
    pub extractor_seed: u64,
    /// Feature extractor weights; the seeded default when absent.
    pub extractor: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            num_sources: 100,
            num_pairs: 1000,
            samplings: 3,
            seed: 0,
            extractor_seed: DEFAULT_EXTRACTOR_SEED,
            extractor: None,
        }
    }
}

/// Everything a run depends on. Loss weights live in `[loss]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Name of the run directory created under the run root.
    pub run_name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub loss: LossWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_name: "run".into(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            loss: LossWeights::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML document. Unknown keys and invalid values are collected
    /// and reported together.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::parse(text).context("config is not valid TOML")?;
        let mut cfg: RunConfig =
            serde_ignored::deserialize(de, |path| unknown.push(path.to_string())).context("invalid config")?;
        let raw: toml::Table = text.parse().context("config is not valid TOML")?;
        if raw
            .get("train")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.contains_key("loss_weights"))
        {
            unknown.push("train.loss_weights (loss weights belong in [loss])".into());
        }
        let mut problems: Vec<String> = unknown.into_iter().map(|k| format!("unknown key {k}")).collect();
        problems.extend(cfg.problems());
        if !problems.is_empty() {
            bail!("invalid config:\n  {}", problems.join("\n  "));
        }
        cfg.train.loss_weights = cfg.loss.clone();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |section: &str, r: coadain::Result<()>| {
            if let Err(e) = r {
                out.extend(e.to_string().split("; ").map(|m| format!("[{section}] {m}")));
            }
        };
        check("model", self.model.validate());
        check("train", self.train.validate());
        check("loss", self.loss.validate());
        check("data", self.preprocess().validate());
        if self.run_name.is_empty() || self.run_name.contains(['/', '\\']) {
            out.push(format!("run_name {:?} must be a non-empty plain name", self.run_name));
        }
        if self.data.label_map.num_components() != self.model.num_components {
            out.push(format!(
                "[data] label_map has {} components but [model] num_components is {}",
                self.data.label_map.num_components(),
                self.model.num_components
            ));
        }
        for (key, v) in [
            ("num_sources", self.eval.num_sources),
            ("num_pairs", self.eval.num_pairs),
            ("samplings", self.eval.samplings),
        ] {
            if v == 0 {
                out.push(format!("[eval] {key} must be at least 1"));
            }
        }
        out
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            image_size: self.model.image_size,
            thermal_min: self.data.thermal_min,
            thermal_max: self.data.thermal_max,
            label_map: self.data.label_map.clone(),
        }
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Recovers the config echoed into a checkpoint, if any.
    pub fn from_echo(echo: &serde_json::Value) -> Option<Self> {
        echo.get("config").and_then(|c| serde_json::from_value(c.clone()).ok())
    }
}

/// `explicit`, else `$COADAIN_RUN_ROOT/<name>`, else `runs/<name>`.
pub fn run_dir(explicit: Option<&Path>, name: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    let root = std::env::var_os(RUN_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(name)
}
