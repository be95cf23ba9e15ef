use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coadain_cli::gallery::grid_dims;

fn coadain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coadain"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "command failed: {}", stderr(&out));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pngs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    v.sort();
    v
}

fn make_synthetic(out: &Path, scenes: usize, seed: u64) {
    ok(coadain(&[
        "make-synthetic",
        "--out",
        s(out),
        "--num-scenes",
        &scenes.to_string(),
        "--seed",
        &seed.to_string(),
    ]));
}

fn write_config(path: &Path, data: &Path, iterations: u64, extra: &str) {
    let text = format!(
        r#"run_name = "tiny"
{extra}
[model]
content_channels = 8
base_filters = 4
num_res_blocks = 1
image_size = [64, 128]
discriminator_filters = 4
discriminator_scales = 2
mlp_dim = 8
upsample_kernel = 3

[train]
iterations = {iterations}
learning_rate = 0.001
checkpoint_every = 2
log_every = 1

[data]
train = "{d}"
test = "{d}"
"#,
        d = s(data)
    );
    std::fs::write(path, text).unwrap();
}

/// A dataset of `scenes` scenes and a checkpoint trained on it for two steps.
fn trained(dir: &Path, scenes: usize) -> (PathBuf, PathBuf, PathBuf) {
    let data = dir.join("data");
    make_synthetic(&data, scenes, 5);
    let config = dir.join("run.toml");
    write_config(&config, &data, 2, "");
    let run = dir.join("run");
    ok(coadain(&["train", "--config", s(&config), "--run-dir", s(&run)]));
    (data, config, run.join("checkpoints").join("final.safetensors"))
}

#[test]
fn make_synthetic_is_seeded_and_validates_its_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    make_synthetic(&a, 10, 3);
    make_synthetic(&b, 10, 3);
    for sub in ["rgb", "thermal", "seg"] {
        let files = pngs(&a.join(sub));
        assert_eq!(files.len(), 10, "{sub}");
        for f in files {
            let twin = b.join(sub).join(f.file_name().unwrap());
            assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(twin).unwrap());
        }
    }
    assert!(a.join("manifest.json").exists());

    let out = coadain(&["make-synthetic", "--out", s(&dir.path().join("c")), "--num-scenes", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_names_a_missing_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_dataset");
    let config = dir.path().join("run.toml");
    write_config(&config, &missing, 2, "");
    let out = coadain(&["train", "--config", s(&config), "--run-dir", s(&dir.path().join("run"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

#[test]
fn train_lists_every_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    write_config(&config, dir.path(), 2, "learning_rat = 1\n");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("[train]\n", "[train]\nbatch = 4\n");
    std::fs::write(&config, text).unwrap();
    let out = coadain(&["train", "--config", s(&config), "--run-dir", s(&dir.path().join("run"))]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("learning_rat") && err.contains("train.batch"), "{err}");
}

#[test]
fn resumed_training_continues_the_iteration_numbering() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _, checkpoint) = trained(dir.path(), 4);
    let run = dir.path().join("run");
    let longer = dir.path().join("longer.toml");
    write_config(&longer, &data, 4, "");
    ok(coadain(&[
        "train",
        "--config",
        s(&longer),
        "--run-dir",
        s(&run),
        "--resume",
        s(&checkpoint),
    ]));

    let log = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    let iterations: Vec<u64> = log
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["iteration"]
                .as_u64()
                .unwrap()
        })
        .collect();
    assert_eq!(iterations, vec![1, 2, 3, 4]);
    for name in [
        "iter_00000002.safetensors",
        "iter_00000004.safetensors",
        "final.safetensors",
    ] {
        assert!(run.join("checkpoints").join(name).exists(), "{name}");
    }
    assert!(run.join("config.json").exists());
}

#[test]
fn translate_writes_styles_per_mode_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _, checkpoint) = trained(dir.path(), 3);
    let translate = |out: &Path, mode: &str| {
        ok(coadain(&[
            "translate",
            "--checkpoint",
            s(&checkpoint),
            "--input",
            s(&data),
            "--out",
            s(out),
            "--num-styles",
            "2",
            "--resample",
            mode,
            "--seed",
            "4",
        ]));
    };
    let (first, second) = (dir.path().join("t1"), dir.path().join("t2"));
    for mode in ["vehicles", "all"] {
        translate(&first, mode);
        translate(&second, mode);
        let outputs = pngs(&first.join(mode));
        assert_eq!(outputs.len(), 6, "{mode}");
        for f in &outputs {
            let img = image::open(f).unwrap();
            assert_eq!((img.width(), img.height()), (128, 64));
            assert_eq!(img.color(), image::ColorType::L16);
            let twin = second.join(mode).join(f.file_name().unwrap());
            assert_eq!(std::fs::read(f).unwrap(), std::fs::read(twin).unwrap());
        }
        assert!(first.join(mode).join("translate.json").exists());
    }
    assert_eq!(pngs(&first.join("sources")).len(), 3);
}

#[test]
fn translate_reports_a_missing_segmentation_and_keeps_going() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _, checkpoint) = trained(dir.path(), 3);
    let segs = pngs(&data.join("seg"));
    std::fs::remove_file(&segs[1]).unwrap();
    let out_dir = dir.path().join("out");
    let out = coadain(&[
        "translate",
        "--checkpoint",
        s(&checkpoint),
        "--input",
        s(&data),
        "--out",
        s(&out_dir),
        "--num-styles",
        "1",
    ]);
    assert!(!out.status.success());
    let missing = segs[1].file_stem().unwrap().to_str().unwrap();
    assert!(stderr(&out).contains(missing), "{}", stderr(&out));
    let written = pngs(&out_dir.join("vehicles"));
    assert_eq!(written.len(), 2);
    assert!(written.iter().all(|p| !p.to_str().unwrap().contains(missing)));
}

#[test]
fn eval_real_against_real_fid_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    make_synthetic(&data, 6, 8);
    let config = dir.path().join("run.toml");
    write_config(&config, &data, 2, "");
    let report = dir.path().join("reports").join("fid.json");
    ok(coadain(&[
        "eval",
        "--config",
        s(&config),
        "--which",
        "fid",
        "--real-vs-real",
        "--out",
        s(&report),
    ]));
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(value["mean"].as_f64().unwrap() < 1e-6);
    assert_eq!(value["counters"]["sampling_passes"], 3);
    let csv = std::fs::read_to_string(dir.path().join("reports").join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn eval_rejects_too_few_sources_and_unknown_protocols() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _, checkpoint) = trained(dir.path(), 2);
    let out = coadain(&[
        "eval",
        "--checkpoint",
        s(&checkpoint),
        "--dataset",
        s(&data),
        "--which",
        "lpips",
        "--num-sources",
        "100",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("100"), "{}", stderr(&out));

    let out = coadain(&["eval", "--checkpoint", s(&checkpoint), "--which", "sharpness"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gallery_builds_one_grid_per_source() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, checkpoint) = trained(dir.path(), 2);
    let single = dir.path().join("single");
    make_synthetic(&single, 1, 9);
    let run = dir.path().join("translated");
    for mode in ["vehicles", "all"] {
        ok(coadain(&[
            "translate",
            "--checkpoint",
            s(&checkpoint),
            "--input",
            s(&single),
            "--out",
            s(&run),
            "--num-styles",
            "2",
            "--resample",
            mode,
        ]));
    }
    let out_dir = dir.path().join("gallery");
    ok(coadain(&["gallery", "--run", s(&run), "--out", s(&out_dir)]));
    let grids = pngs(&out_dir);
    assert_eq!(grids.len(), 1);
    let img = image::open(&grids[0]).unwrap();
    assert_eq!((img.width(), img.height()), grid_dims((128, 64), 3, 2));

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = coadain(&["gallery", "--run", s(&empty), "--out", s(&dir.path().join("g2"))]);
    assert!(!out.status.success());
}
