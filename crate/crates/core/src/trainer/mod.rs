//! Bidirectional unpaired training: one discriminator update followed by one
//! generator update per batch, checkpointing and a JSONL metrics log.

mod checkpoint;
mod step;

pub use checkpoint::{load_checkpoint, load_model, save_checkpoint, CheckpointMeta, CHECKPOINT_FORMAT_VERSION};
pub use step::train_step;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{BatchOrder, Sample};
use crate::error::{Error, Result};
use crate::nets::{Model, ModelConfig};
use crate::objectives::{LossReport, LossWeights};
use crate::optim::{Adam, AdamConfig};

/// RNG stream used for style sampling during training.
const STYLE_STREAM: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 disables periodic ones.
    pub checkpoint_every: u64,
    /// Append a metrics record every this many iterations; 0 disables the log.
    pub log_every: u64,
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch_size: 1,
            learning_rate: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            weight_decay: 1e-4,
            seed: 0,
            checkpoint_every: 0,
            log_every: 10,
            loss_weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.iterations == 0 {
            bad.push("iterations must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be at least 1".to_string());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            bad.push(format!("learning_rate must be nonnegative, got {}", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                bad.push(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            bad.push("weight_decay must be nonnegative".to_string());
        }
        if let Err(e) = self.loss_weights.validate() {
            bad.push(e.to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(bad.join("; ")))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Everything needed to continue training bit-for-bit.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    pub config: TrainConfig,
    pub generator_opt: Adam,
    pub discriminator_opt: Adam,
    /// Completed training steps.
    pub iteration: u64,
    rng: ChaCha8Rng,
    /// Free-form configuration echo stored alongside checkpoints.
    pub echo: serde_json::Value,
}

fn style_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STYLE_STREAM);
    rng
}

impl TrainState {
    /// Fresh model initialised from `config.seed`.
    pub fn new(model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(model_config, config.seed)?;
        Ok(Self {
            model,
            generator_opt: Adam::new(config.adam()),
            discriminator_opt: Adam::new(config.adam()),
            iteration: 0,
            rng: style_rng(config.seed),
            config,
            echo: serde_json::Value::Null,
        })
    }

    pub fn rng_word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub(crate) fn restore_rng(&mut self, word_pos: u128) {
        self.rng = style_rng(self.config.seed);
        self.rng.set_word_pos(word_pos);
    }
}

fn order_seed(seed: u64, domain: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain);
    rng.next_u64()
}

/// Independent deterministic batch schedules for the two domains.
pub fn batch_orders(config: &TrainConfig, len_a: usize, len_b: usize) -> Result<(BatchOrder, BatchOrder)> {
    Ok((
        BatchOrder::new(len_a, config.batch_size, order_seed(config.seed, 1), true)?,
        BatchOrder::new(len_b, config.batch_size, order_seed(config.seed, 2), true)?,
    ))
}

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Checkpoints go to `run_dir/checkpoints`, the log to `run_dir/metrics.jsonl`.
    pub run_dir: Option<PathBuf>,
}

impl FitOptions {
    pub fn checkpoint_dir(&self) -> Option<PathBuf> {
        self.run_dir.as_ref().map(|d| d.join("checkpoints"))
    }

    pub fn metrics_path(&self) -> Option<PathBuf> {
        self.run_dir.as_ref().map(|d| d.join("metrics.jsonl"))
    }
}

pub fn periodic_checkpoint_name(iteration: u64) -> String {
    format!("iter_{iteration:08}.safetensors")
}

pub const FINAL_CHECKPOINT: &str = "final.safetensors";

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Runs [`train_step`] until `state.iteration` reaches `config.iterations`,
/// calling `observe` after every step. A step that fails (for example on a
/// non-finite loss) aborts the run; checkpoints already written are kept.
pub fn fit(
    mut state: TrainState,
    dataset_a: &[Sample],
    dataset_b: &[Sample],
    options: &FitOptions,
    mut observe: impl FnMut(u64, &LossReport),
) -> Result<TrainState> {
    state.config.validate()?;
    if dataset_a.is_empty() || dataset_b.is_empty() {
        return Err(Error::invalid("training datasets must be non-empty"));
    }
    let (order_a, order_b) = batch_orders(&state.config, dataset_a.len(), dataset_b.len())?;
    let ckpt_dir = options.checkpoint_dir();
    if let Some(dir) = &ckpt_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let metrics = options.metrics_path();
    let start = Instant::now();
    while state.iteration < state.config.iterations {
        let t = state.iteration;
        let batch_a: Vec<&Sample> = order_a.batch(t).into_iter().map(|i| &dataset_a[i]).collect();
        let batch_b: Vec<&Sample> = order_b.batch(t).into_iter().map(|i| &dataset_b[i]).collect();
        let report = train_step(&mut state, &batch_a, &batch_b)?;
        let done = state.iteration;
        observe(done, &report);
        if let Some(path) = &metrics {
            if state.config.log_every > 0 && done.is_multiple_of(state.config.log_every) {
                let mut record = serde_json::Map::new();
                record.insert("iteration".into(), done.into());
                record.insert("wall_clock_s".into(), start.elapsed().as_secs_f64().into());
                for (k, v) in report.to_record() {
                    record.insert(k, v.into());
                }
                append_line(path, &serde_json::Value::Object(record).to_string())?;
            }
        }
        if let Some(dir) = &ckpt_dir {
            if state.config.checkpoint_every > 0 && done.is_multiple_of(state.config.checkpoint_every) {
                save_checkpoint(&state, &dir.join(periodic_checkpoint_name(done)))?;
            }
        }
        if done.is_multiple_of(50) {
            log::info!("iteration {done}: generator {:.4}", report.generator_total);
        }
    }
    if let Some(dir) = &ckpt_dir {
        save_checkpoint(&state, &dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(state)
}
