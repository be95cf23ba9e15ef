use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use coadain::coadain::{StyleCode, StyleCodeSet};
use coadain::datasets::preprocess_rgb;
use coadain::nets::Model;
use coadain::trainer::load_checkpoint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::images::{list_pngs, open_gray, open_rgb, stem, write_json, write_rgb_png, write_thermal_png};

/// Which style codes differ between the outputs of one source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    /// Only the vehicle code; the other codes are shared.
    Vehicles,
    /// Every code except the vehicle one.
    Background,
    /// Every code.
    All,
}

impl Resample {
    pub fn dir_name(self) -> &'static str {
        match self {
            Resample::Vehicles => "vehicles",
            Resample::Background => "background",
            Resample::All => "all",
        }
    }
}

/// Style sets for the outputs of one source: a shared base with the selected
/// codes redrawn for each output.
pub fn style_sets(model: &Model, resample: Resample, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<StyleCodeSet>> {
    let base = model.sample_styles(rng);
    let (k, d) = (model.config.num_components, model.config.style_dim);
    let vehicle = model.config.vehicle_component;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut set = base.clone();
        for i in 0..k {
            let redraw = match resample {
                Resample::Vehicles => i == vehicle,
                Resample::Background => i != vehicle,
                Resample::All => true,
            };
            if redraw {
                set = set.with_code(StyleCode::sample(i, d, rng))?;
            }
        }
        out.push(set);
    }
    Ok(out)
}

pub struct TranslateArgs<'a> {
    pub checkpoint: &'a Path,
    pub input: &'a Path,
    pub out: &'a Path,
    pub num_styles: usize,
    pub resample: Resample,
    pub seed: u64,
}

/// Returns the number of inputs that failed.
pub fn run(args: &TranslateArgs) -> Result<usize> {
    let state =
        load_checkpoint(args.checkpoint).with_context(|| format!("checkpoint {}", args.checkpoint.display()))?;
    let cfg = RunConfig::from_echo(&state.echo).unwrap_or_else(|| {
        log::warn!("checkpoint carries no run config; using default data settings");
        RunConfig {
            model: state.model.config.clone(),
            ..RunConfig::default()
        }
    });
    let pre = cfg.preprocess();
    let model = state.model;
    let rgb_files = list_pngs(&args.input.join("rgb"))?;
    if rgb_files.is_empty() {
        bail!("no RGB images under {}", args.input.join("rgb").display());
    }
    let mode_dir = args.out.join(args.resample.dir_name());
    let sources_dir = args.out.join("sources");
    for d in [&mode_dir, &sources_dir] {
        std::fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut failures = 0;
    let mut written = Vec::new();
    for rgb_path in &rgb_files {
        let name = stem(rgb_path);
        // styles are drawn even for failing inputs so later outputs do not shift
        let sets = style_sets(&model, args.resample, args.num_styles, &mut rng)?;
        let result = (|| -> Result<Vec<String>> {
            let seg_path = args.input.join("seg").join(format!("{name}.png"));
            if !seg_path.exists() {
                bail!("missing segmentation {}", seg_path.display());
            }
            let (rgb, mask) = preprocess_rgb(&open_rgb(rgb_path)?, &open_gray(&seg_path)?, &pre)?;
            write_rgb_png(&rgb, &sources_dir.join(format!("{name}.png")))?;
            let mut files = Vec::new();
            for (k, styles) in sets.iter().enumerate() {
                let out = model.translate(&rgb, &mask, styles)?;
                let file = format!("{name}_{k:02}.png");
                write_thermal_png(&out, &pre, &mode_dir.join(&file))?;
                files.push(file);
            }
            Ok(files)
        })();
        match result {
            Ok(files) => written.extend(files),
            Err(e) => {
                log::error!("{}: {e:#}", rgb_path.display());
                failures += 1;
            }
        }
    }
    write_json(
        &mode_dir.join("translate.json"),
        &serde_json::json!({
            "checkpoint": args.checkpoint,
            "input": args.input,
            "num_styles": args.num_styles,
            "resample": args.resample,
            "seed": args.seed,
            "outputs": written,
            "failures": failures,
            "config": cfg.echo(),
        }),
    )?;
    println!(
        "{} outputs for {} inputs in {} ({failures} failed)",
        written.len(),
        rgb_files.len(),
        mode_dir.display()
    );
    Ok(failures)
}
