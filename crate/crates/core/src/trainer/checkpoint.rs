//! Checkpoints as safetensors archives: every parameter array, both Adam
//! states, and a JSON metadata document under the `coadain` header key.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::nets::{Model, ModelConfig, ParamGroup};
use crate::nn::Parameters;
use crate::optim::{Adam, Moments};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const META_KEY: &str = "coadain";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub iteration: u64,
    pub seed: u64,
    /// Position of the style-sampling RNG, as a decimal string.
    pub rng_word_pos: String,
    pub generator_steps: u64,
    pub discriminator_steps: u64,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub echo: serde_json::Value,
}

fn to_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn from_bytes(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn adam_tensors(prefix: &str, opt: &Adam, out: &mut Vec<(String, Vec<usize>, Vec<u8>)>) {
    for (name, m) in &opt.state {
        out.push((format!("{prefix}.m.{name}"), vec![m.m.len()], to_bytes(&m.m)));
        out.push((format!("{prefix}.v.{name}"), vec![m.v.len()], to_bytes(&m.v)));
    }
}

/// Writes the archive to a temporary sibling and renames it into place, so an
/// interrupted save never clobbers an existing checkpoint.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut tensors: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    state.model.visit("model", &mut |name, p| {
        tensors.push((name.to_string(), p.shape.clone(), to_bytes(&p.value)))
    });
    adam_tensors("adam.generator", &state.generator_opt, &mut tensors);
    adam_tensors("adam.discriminator", &state.discriminator_opt, &mut tensors);

    let meta = CheckpointMeta {
        format_version: CHECKPOINT_FORMAT_VERSION,
        iteration: state.iteration,
        seed: state.config.seed,
        rng_word_pos: state.rng_word_pos().to_string(),
        generator_steps: state.generator_opt.step,
        discriminator_steps: state.discriminator_opt.step,
        model_config: state.model.config.clone(),
        train_config: state.config.clone(),
        echo: state.echo.clone(),
    };
    let meta_json = serde_json::to_string(&meta).map_err(|e| Error::Format(e.to_string()))?;
    let views = tensors
        .iter()
        .map(|(n, shape, bytes)| Ok((n.as_str(), TensorView::new(Dtype::F32, shape.clone(), bytes)?)))
        .collect::<Result<Vec<_>, safetensors::SafeTensorError>>()
        .map_err(|e| Error::Format(e.to_string()))?;
    let header = HashMap::from([(META_KEY.to_string(), meta_json)]);
    let bytes = safetensors::serialize(views, Some(header)).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_meta(bytes: &[u8]) -> Result<CheckpointMeta> {
    let (_, metadata) = SafeTensors::read_metadata(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let raw = metadata
        .metadata()
        .as_ref()
        .and_then(|m| m.get(META_KEY))
        .ok_or_else(|| Error::Format(format!("missing field {META_KEY} in the archive header")))?;
    let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| Error::Format(e.to_string()))?;
    let version = value
        .get("format_version")
        .ok_or_else(|| Error::Format("missing field format_version".into()))?;
    if version.as_u64() != Some(CHECKPOINT_FORMAT_VERSION as u64) {
        return Err(Error::Format(format!(
            "checkpoint format_version {version} is not supported (expected {CHECKPOINT_FORMAT_VERSION})"
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))
}

fn load_adam(archive: &SafeTensors<'_>, prefix: &str, opt: &mut Adam, steps: u64) -> Result<()> {
    let m_prefix = format!("{prefix}.m.");
    let mut state = BTreeMap::new();
    for name in archive.names() {
        let Some(param) = name.strip_prefix(&m_prefix) else {
            continue;
        };
        let m = tensor(archive, name)?;
        let v_name = format!("{prefix}.v.{param}");
        let v = tensor(archive, &v_name)?;
        if m.len() != v.len() {
            return Err(Error::Format(format!("{v_name} does not match its first moment")));
        }
        state.insert(param.to_string(), Moments { m, v });
    }
    opt.state = state;
    opt.step = steps;
    Ok(())
}

fn tensor(archive: &SafeTensors<'_>, name: &str) -> Result<Vec<f32>> {
    let view = archive
        .tensor(name)
        .map_err(|_| Error::Format(format!("missing field {name}")))?;
    if view.dtype() != Dtype::F32 {
        return Err(Error::Format(format!("{name} is {}, expected F32", view.dtype())));
    }
    Ok(from_bytes(view.data()))
}

/// Restores a [`TrainState`] written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta = read_meta(&bytes)?;
    let archive = SafeTensors::deserialize(&bytes).map_err(|e| Error::Format(e.to_string()))?;
    let mut state = TrainState::new(meta.model_config.clone(), meta.train_config.clone())?;
    let mut failure = None;
    state.model.visit_mut("model", &mut |name, p| {
        if failure.is_some() {
            return;
        }
        match archive.tensor(name) {
            Ok(view) if view.dtype() == Dtype::F32 && view.shape() == p.shape.as_slice() => {
                p.value = from_bytes(view.data());
            }
            Ok(view) => {
                failure = Some(format!(
                    "{name} has shape {:?} ({}) but the model expects {:?}",
                    view.shape(),
                    view.dtype(),
                    p.shape
                ))
            }
            Err(_) => failure = Some(format!("missing field {name}")),
        }
    });
    if let Some(msg) = failure {
        return Err(Error::Format(msg));
    }
    let word_pos: u128 = meta
        .rng_word_pos
        .parse()
        .map_err(|_| Error::Format("rng_word_pos is not an integer".into()))?;
    state.iteration = meta.iteration;
    state.echo = meta.echo;
    state.restore_rng(word_pos);
    load_adam(
        &archive,
        "adam.generator",
        &mut state.generator_opt,
        meta.generator_steps,
    )?;
    load_adam(
        &archive,
        "adam.discriminator",
        &mut state.discriminator_opt,
        meta.discriminator_steps,
    )?;
    let mut names = Vec::new();
    state
        .model
        .visit_group(ParamGroup::Generator, &mut |n, _| names.push(n.to_string()));
    if let Some(n) = names
        .iter()
        .find(|n| state.generator_opt.step > 0 && !state.generator_opt.state.contains_key(n.as_str()))
    {
        return Err(Error::Format(format!("missing field adam.generator.m.{n}")));
    }
    Ok(state)
}

/// Loads only the model of a checkpoint.
pub fn load_model(path: &Path) -> Result<Model> {
    load_checkpoint(path).map(|s| s.model)
}
