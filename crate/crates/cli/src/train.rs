use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coadain::datasets::{load_samples, scan_dataset, Sample, Split};
use coadain::trainer::{fit, load_checkpoint, FitOptions, TrainState, FINAL_CHECKPOINT};

use crate::config::{run_dir, RunConfig};
use crate::images::write_json;

pub fn load_split(cfg: &RunConfig, root: Option<&Path>, split: Split) -> Result<Vec<Sample>> {
    let Some(root) = root else {
        bail!("no dataset configured for the {split} split ([data] {split} = \"...\")");
    };
    let (manifest, report) =
        scan_dataset(root, split, &cfg.data.label_map).with_context(|| format!("cannot read the {split} dataset"))?;
    for orphan in &report.orphans {
        log::warn!("skipping incomplete triple {}", orphan.display());
    }
    if manifest.is_empty() {
        bail!("dataset {} has no complete rgb/thermal/seg triples", root.display());
    }
    let samples = load_samples(&manifest, &cfg.preprocess())?;
    log::info!("{} {split} samples from {}", samples.len(), manifest.root.display());
    Ok(samples)
}

pub fn run(config_path: &Path, run_dir_arg: Option<&Path>, resume: Option<&Path>) -> Result<PathBuf> {
    let cfg = RunConfig::load(config_path)?;
    let samples = load_split(&cfg, cfg.data.train.as_deref(), Split::Train)?;
    let dir = run_dir(run_dir_arg, &cfg.run_name);
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create run directory {}", dir.display()))?;

    let mut state = match resume {
        Some(path) => {
            let mut state = load_checkpoint(path).with_context(|| format!("cannot resume from {}", path.display()))?;
            if state.model.config != cfg.model {
                bail!(
                    "checkpoint {} was trained with a different [model] section",
                    path.display()
                );
            }
            if state.iteration >= cfg.train.iterations {
                bail!(
                    "checkpoint is at iteration {}, nothing left to do for iterations = {}",
                    state.iteration,
                    cfg.train.iterations
                );
            }
            state.config.iterations = cfg.train.iterations;
            log::info!("resuming at iteration {}", state.iteration);
            state
        }
        None => TrainState::new(cfg.model.clone(), cfg.train.clone())?,
    };
    state.echo = serde_json::json!({ "config": cfg.echo() });
    write_json(&dir.join("config.json"), &cfg.echo())?;

    let options = FitOptions {
        run_dir: Some(dir.clone()),
    };
    let total = state.config.iterations;
    let state = fit(state, &samples, &samples, &options, |it, report| {
        if it % 50 == 0 || it == total {
            log::info!("iteration {it}/{total}: generator {:.4}", report.generator_total);
        }
    })?;
    let final_path = options.checkpoint_dir().expect("run dir set").join(FINAL_CHECKPOINT);
    println!(
        "trained {} iterations; final checkpoint {}",
        state.iteration,
        final_path.display()
    );
    Ok(dir)
}
