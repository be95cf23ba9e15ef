use std::path::Path;

use coadain::datasets::{generate_synthetic_scene, random_scene_spec, Sample};
use coadain::nets::{Model, ModelConfig};
use coadain::nn::{Param, Parameters};
use coadain::objectives::{LossReport, LossWeights};
use coadain::trainer::{
    fit, load_checkpoint, load_model, periodic_checkpoint_name, save_checkpoint, train_step, FitOptions, TrainConfig,
    TrainState, FINAL_CHECKPOINT,
};
use coadain::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny() -> ModelConfig {
    ModelConfig {
        content_channels: 8,
        base_filters: 4,
        num_res_blocks: 1,
        image_size: (64, 128),
        discriminator_filters: 4,
        discriminator_scales: 2,
        mlp_dim: 8,
        upsample_kernel: 3,
        ..ModelConfig::default()
    }
}

fn scenes(n: u64, offset: u64) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let (rgb, thermal, mask) = generate_synthetic_scene(&random_scene_spec(offset + i)).unwrap();
            Sample {
                stem: format!("scene_{i}"),
                rgb,
                thermal,
                mask,
            }
        })
        .collect()
}

fn config(iterations: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        seed: 9,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

fn params(model: &Model) -> Vec<(String, Vec<f32>)> {
    let mut out = Vec::new();
    model.visit("", &mut |n, p: &Param| out.push((n.to_string(), p.value.clone())));
    out
}

fn bits(report: &LossReport) -> Vec<(String, u64)> {
    report.to_record().into_iter().map(|(k, v)| (k, v.to_bits())).collect()
}

fn run(iterations: u64, data: &[Sample]) -> (TrainState, Vec<Vec<(String, u64)>>) {
    let mut log = Vec::new();
    let state = TrainState::new(tiny(), config(iterations)).unwrap();
    let state = fit(state, data, data, &FitOptions::default(), |_, r| log.push(bits(r))).unwrap();
    (state, log)
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let data = scenes(4, 100);
    let (a, log_a) = run(10, &data);
    let (b, log_b) = run(10, &data);
    assert_eq!(log_a.len(), 10);
    assert_eq!(log_a, log_b);
    assert_eq!(params(&a.model), params(&b.model));
    assert_eq!(a.rng_word_pos(), b.rng_word_pos());
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let data = scenes(2, 200);
    let mut state = TrainState::new(
        tiny(),
        TrainConfig {
            learning_rate: 0.0,
            ..config(1)
        },
    )
    .unwrap();
    let before = params(&state.model);
    train_step(&mut state, &[&data[0]], &[&data[1]]).unwrap();
    assert_eq!(params(&state.model), before);
    assert_eq!(state.iteration, 1);
}

#[test]
fn optimizers_only_touch_their_own_networks() {
    let data = scenes(2, 300);
    let cfg = TrainConfig {
        weight_decay: 0.0,
        loss_weights: LossWeights::zero(),
        ..config(1)
    };
    let mut state = TrainState::new(tiny(), cfg).unwrap();
    let before = params(&state.model);
    train_step(&mut state, &[&data[0]], &[&data[1]]).unwrap();
    let after = params(&state.model);
    let mut discriminator_changed = false;
    for ((name, b), (_, a)) in before.iter().zip(&after) {
        if name.contains("discriminator") {
            discriminator_changed |= a != b;
        } else {
            // every generator-side loss is weighted zero
            assert_eq!(a, b, "{name}");
        }
    }
    assert!(discriminator_changed);
    assert!(state.generator_opt.state.keys().all(|k| !k.contains("discriminator")));
    assert!(state
        .discriminator_opt
        .state
        .keys()
        .all(|k| k.contains("discriminator")));
    assert!(!state.discriminator_opt.state.is_empty());
}

#[test]
fn invalid_configs_and_batches_are_rejected() {
    assert!(TrainState::new(tiny(), config(0)).is_err());
    assert!(TrainState::new(
        tiny(),
        TrainConfig {
            batch_size: 0,
            ..config(1)
        }
    )
    .is_err());
    assert!(TrainState::new(
        tiny(),
        TrainConfig {
            learning_rate: -1.0,
            ..config(1)
        }
    )
    .is_err());
    let data = scenes(2, 400);
    let mut state = TrainState::new(tiny(), config(1)).unwrap();
    assert!(train_step(&mut state, &[&data[0]], &[]).is_err());
    assert!(fit(state, &[], &data, &FitOptions::default(), |_, _| ()).is_err());
}

#[test]
fn metrics_log_and_checkpoint_counting() {
    let data = scenes(3, 500);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        checkpoint_every: 4,
        log_every: 2,
        ..config(4)
    };
    let options = FitOptions {
        run_dir: Some(dir.path().to_path_buf()),
    };
    fit(TrainState::new(tiny(), cfg).unwrap(), &data, &data, &options, |_, _| ()).unwrap();
    let mut files: Vec<String> = std::fs::read_dir(options.checkpoint_dir().unwrap())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, vec![FINAL_CHECKPOINT.to_string(), periodic_checkpoint_name(4)]);

    let log = std::fs::read_to_string(options.metrics_path().unwrap()).unwrap();
    let records: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[1]["iteration"], 4);
    for key in [
        "wall_clock_s",
        "gen/total",
        "gen/a2b/ocdp",
        "gen/b2a/image_recon",
        "dis/a2b/real",
        "dis/total",
    ] {
        assert!(records[0].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let data = scenes(3, 600);
    let (mut state, _) = run(3, &data);
    state.echo = serde_json::json!({ "note": "round trip" });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.safetensors");
    save_checkpoint(&state, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(params(&loaded.model), params(&state.model));
    assert_eq!(loaded.iteration, 3);
    assert_eq!(loaded.rng_word_pos(), state.rng_word_pos());
    assert_eq!(loaded.generator_opt.step, state.generator_opt.step);
    assert_eq!(loaded.generator_opt.state, state.generator_opt.state);
    assert_eq!(loaded.discriminator_opt.state, state.discriminator_opt.state);
    assert_eq!(loaded.config, state.config);
    assert_eq!(loaded.echo, state.echo);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let styles = state.model.sample_styles(&mut rng);
    let s = &data[0];
    let model = load_model(&path).unwrap();
    assert_eq!(
        model.translate(&s.rgb, &s.mask, &styles).unwrap(),
        state.model.translate(&s.rgb, &s.mask, &styles).unwrap()
    );
}

fn rewrite_meta(path: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let bytes = std::fs::read(path).unwrap();
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + header_len]).unwrap();
    let mut meta: serde_json::Value =
        serde_json::from_str(header["__metadata__"]["coadain"].as_str().unwrap()).unwrap();
    edit(&mut meta);
    header["__metadata__"]["coadain"] = meta.to_string().into();
    let mut text = header.to_string();
    while !text.len().is_multiple_of(8) {
        text.push(' ');
    }
    let mut out = (text.len() as u64).to_le_bytes().to_vec();
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&bytes[8 + header_len..]);
    std::fs::write(path, out).unwrap();
}

#[test]
fn wrong_version_and_missing_fields_are_rejected() {
    let state = TrainState::new(tiny(), config(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.safetensors");
    save_checkpoint(&state, &path).unwrap();
    rewrite_meta(&path, |m| m["format_version"] = 99.into());
    let err = load_checkpoint(&path).unwrap_err();
    assert!(matches!(err, Error::Format(_)), "{err}");
    assert!(err.to_string().contains("version"), "{err}");

    save_checkpoint(&state, &path).unwrap();
    rewrite_meta(&path, |m| {
        m.as_object_mut().unwrap().remove("iteration");
    });
    let err = load_checkpoint(&path).unwrap_err();
    assert!(err.to_string().contains("iteration"), "{err}");

    std::fs::write(&path, b"not an archive").unwrap();
    assert!(matches!(load_checkpoint(&path).unwrap_err(), Error::Format(_)));
    assert!(load_checkpoint(&dir.path().join("absent.safetensors")).is_err());
}

#[test]
fn resume_reproduces_the_uninterrupted_trajectory() {
    let data = scenes(3, 700);
    let (full, full_log) = run(6, &data);

    let dir = tempfile::tempdir().unwrap();
    let options = FitOptions {
        run_dir: Some(dir.path().to_path_buf()),
    };
    let cfg = TrainConfig {
        checkpoint_every: 3,
        ..config(6)
    };
    let mut first = TrainState::new(tiny(), cfg).unwrap();
    first.config.iterations = 3;
    let mut head = Vec::new();
    fit(first, &data, &data, &options, |_, r| head.push(bits(r))).unwrap();

    let mut resumed = load_checkpoint(&options.checkpoint_dir().unwrap().join(periodic_checkpoint_name(3))).unwrap();
    resumed.config.iterations = 6;
    let mut tail = Vec::new();
    let resumed = fit(resumed, &data, &data, &FitOptions::default(), |_, r| tail.push(bits(r))).unwrap();

    head.extend(tail);
    assert_eq!(head, full_log);
    assert_eq!(params(&resumed.model), params(&full.model));
}
