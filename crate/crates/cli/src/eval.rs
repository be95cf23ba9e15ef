use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use coadain::datasets::Split;
use coadain::metrics::{
    diversity_protocol, fid_protocol, DiversityConfig, DiversityMode, FeatureExtractor, FidConfig, RealThermal,
    Translator,
};
use coadain::nets::Model;
use coadain::trainer::load_checkpoint;

use crate::config::RunConfig;
use crate::images::write_json;
use crate::train::load_split;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Lpips,
    LpipsVehicle,
    Fid,
}

pub struct EvalArgs {
    pub checkpoint: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub which: Protocol,
    pub seed: Option<u64>,
    pub num_sources: Option<usize>,
    pub num_pairs: Option<usize>,
    pub samplings: Option<usize>,
    pub real_vs_real: bool,
    pub out: Option<PathBuf>,
}

fn resolve(args: &EvalArgs) -> Result<(RunConfig, Option<Model>)> {
    let model = match &args.checkpoint {
        Some(p) => Some(load_checkpoint(p).with_context(|| format!("checkpoint {}", p.display()))?),
        None => None,
    };
    let cfg = match (&args.config, &model) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(state)) => RunConfig::from_echo(&state.echo).unwrap_or_else(|| RunConfig {
            model: state.model.config.clone(),
            ..RunConfig::default()
        }),
        (None, None) => RunConfig::default(),
    };
    Ok((cfg, model.map(|s| s.model)))
}

fn extractor(cfg: &RunConfig) -> Result<FeatureExtractor> {
    match &cfg.eval.extractor {
        Some(path) => FeatureExtractor::load(path).with_context(|| format!("extractor {}", path.display())),
        None => Ok(FeatureExtractor::seeded(1, cfg.eval.extractor_seed)),
    }
}

pub fn run(args: &EvalArgs) -> Result<serde_json::Value> {
    let (cfg, model) = resolve(args)?;
    let dataset = args.dataset.clone().or_else(|| cfg.data.test.clone());
    let samples = load_split(&cfg, dataset.as_deref(), Split::Test)?;
    let real = RealThermal {
        style_shape: (cfg.model.num_components, cfg.model.style_dim),
    };
    let translator: &dyn Translator = match (&model, args.real_vs_real) {
        (_, true) => &real,
        (Some(m), false) => m,
        (None, false) => bail!("a checkpoint is required unless --real-vs-real is given"),
    };
    let ex = extractor(&cfg)?;
    let seed = args.seed.unwrap_or(cfg.eval.seed);
    let report = match args.which {
        Protocol::Lpips | Protocol::LpipsVehicle => {
            let mode = if args.which == Protocol::Lpips {
                DiversityMode::All
            } else {
                DiversityMode::VehicleOnly
            };
            let dc = DiversityConfig {
                num_sources: args.num_sources.unwrap_or(cfg.eval.num_sources),
                num_pairs: args.num_pairs.unwrap_or(cfg.eval.num_pairs),
                seed,
                vehicle_component: cfg.model.vehicle_component,
            };
            diversity_protocol(translator, &samples, &ex, mode, &dc)?
        }
        Protocol::Fid => {
            let fc = FidConfig {
                samplings: args.samplings.unwrap_or(cfg.eval.samplings),
                seed,
            };
            fid_protocol(translator, &samples, &ex, &fc)?
        }
    };
    let mut value = serde_json::to_value(&report)?;
    value["checkpoint"] = serde_json::json!(args.checkpoint);
    value["dataset"] = serde_json::json!(dataset);
    value["real_vs_real"] = args.real_vs_real.into();
    value["config"] = cfg.echo();
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        write_json(out, &value)?;
        if let Some(csv) = csv_beside(out) {
            report.append_csv(&csv)?;
        }
    }
    println!("{}: {:.6} ± {:.6}", report.protocol, report.mean, report.std);
    Ok(value)
}

fn csv_beside(json: &Path) -> Option<PathBuf> {
    json.parent().map(|p| p.join("results.csv"))
}
