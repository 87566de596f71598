use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixsr::image::save_image;
use mixsr::model::ModelConfig;
use mixsr::{ImageBuffer, Weights};

fn mixsr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixsr"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MIXSR_OUT")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn texture(n: usize, seed: usize) -> ImageBuffer {
    ImageBuffer::from_fn(n, n, |y, x, c| ((y * 7 + x * 13 + c * 5 + seed * 3) % 256) as f32 / 255.0)
}

/// Train pairs with a blurred LR, validation pairs with LR equal to HR.
fn dataset(root: &Path, size: usize) {
    for i in 0..3 {
        let hr = texture(size, i);
        save_image(&hr, root.join(format!("train/hr/p{i}.png"))).unwrap();
        save_image(&hr.map(|v| 0.5 * v + 0.25), root.join(format!("train/lr/p{i}.png"))).unwrap();
    }
    for i in 0..2 {
        let hr = texture(size, 10 + i);
        save_image(&hr, root.join(format!("val/hr/v{i}.png"))).unwrap();
        save_image(&hr, root.join(format!("val/lr/v{i}.png"))).unwrap();
    }
}

fn write_config(root: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"schema_version = 1
scale = "desk"
preset = "baseline"

[paths]
output = "out"
train_hr = "train/hr"
train_lr = "train/lr"
val_hr = "val/hr"
val_lr = "val/lr"

[train]
total_iters = 20
validate_every = 10
threads = 1
{extra}"#
    );
    let path = root.join("exp.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mixsr(&[], dir.path())), 1);
    assert_eq!(code(&mixsr(&["prepare", "--bogus"], dir.path())), 1);
    assert_eq!(code(&mixsr(&["--preset", "nonsense", "prepare"], dir.path())), 1);
    assert_eq!(code(&mixsr(&["--help"], dir.path())), 0);
}

#[test]
fn unknown_config_key_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 64);
    let cfg = write_config(dir.path(), "learning_rate_typo = 3\n");
    let out = mixsr(&["--config", cfg.to_str().unwrap(), "prepare"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate_typo"));
}

#[test]
fn missing_manifest_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 64);
    let cfg = write_config(dir.path(), "");
    let out = mixsr(&["--config", cfg.to_str().unwrap(), "train-sr"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("prepare"));
}

#[test]
fn prepare_crops_large_image_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let hr = texture(1000, 0);
    save_image(&hr, root.join("train/hr/big.png")).unwrap();
    save_image(&hr, root.join("train/lr/big.png")).unwrap();
    save_image(&texture(32, 1), root.join("val/hr/v.png")).unwrap();
    save_image(&texture(32, 1), root.join("val/lr/v.png")).unwrap();
    let cfg = write_config(root, "");
    let args = ["--config", cfg.to_str().unwrap(), "--scale", "reference", "prepare"];
    let first = mixsr(&args, root);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("train: 81 paired sub-images from 1 pairs"));
    let manifest = fs::read(root.join("out/prepared/train.tsv")).unwrap();

    let second = mixsr(&args, root);
    assert_eq!(code(&second), 0);
    assert_eq!(fs::read(root.join("out/prepared/train.tsv")).unwrap(), manifest);
    let crops = fs::read_dir(root.join("out/prepared/train/hr")).unwrap().count();
    assert_eq!(crops, 81);
}

#[test]
fn identity_weights_on_identical_pairs_are_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    dataset(root, 64);
    let cfg = write_config(root, "");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&mixsr(&["--config", cfg, "prepare"], root)), 0);
    let weights = root.join("identity.weights");
    Weights::identity(ModelConfig::tiny()).unwrap().save(&weights).unwrap();
    let w = weights.to_str().unwrap();

    let plain = mixsr(&["--config", cfg, "evaluate", "--weights", w], root);
    assert_eq!(code(&plain), 0, "{}", String::from_utf8_lossy(&plain.stderr));
    assert!(stdout(&plain).contains("IdenticalImages: 2 of 2"));
    let csv = fs::read_to_string(root.join("out/eval/metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 2 + 1);
    assert!(lines.last().unwrap().starts_with("MEAN"));

    let ensemble = mixsr(&["--config", cfg, "evaluate", "--weights", w, "--self-ensemble"], root);
    assert_eq!(code(&ensemble), 0);
    assert_eq!(fs::read_to_string(root.join("out/eval/metrics_self_ensemble.csv")).unwrap(), csv);
}

#[test]
fn train_degradation_logs_every_validation() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    dataset(root, 64);
    let cfg = write_config(root, "");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&mixsr(&["--config", cfg, "prepare"], root)), 0);
    let out = mixsr(&["--config", cfg, "train-degradation"], root);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(root.join("out/degradation/train_log.csv")).unwrap();
    // header plus iterations 0, 10, 20
    assert_eq!(log.lines().count(), 4);
    assert!(root.join("out/degradation/best.weights").exists());
    assert!(root.join("out/degradation/final.weights").exists());
}

#[test]
fn plot_needs_at_least_one_log() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mixsr(&["plot"], dir.path())), 1);

    let run = dir.path().join("runA");
    fs::create_dir_all(&run).unwrap();
    fs::write(
        run.join("train_log.csv"),
        "iteration,learning_rate,train_loss,val_psnr,val_ssim\n0,1e-3,0.1,20.0,0.5\n10,1e-3,0.05,22.5,0.6\n",
    )
    .unwrap();
    let out = mixsr(&["plot", "runA/train_log.csv", "-o", "c.svg"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(dir.path().join("c.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert!(svg.contains("runA"));
}

#[test]
fn malformed_log_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "not,a,log\n1,2,3\n").unwrap();
    assert_eq!(code(&mixsr(&["plot", "bad.csv"], dir.path())), 2);
}

#[test]
fn make_toy_writes_the_bundled_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = mixsr(&["make-toy", "--dir", "toy", "--size", "32", "--seed", "7"], dir.path());
    assert_eq!(code(&out), 0);
    let count = |p: &str| fs::read_dir(dir.path().join("toy").join(p)).unwrap().count();
    assert_eq!((count("train/hr"), count("train/lr"), count("val/hr"), count("extra/hr")), (6, 6, 2, 8));
    assert_eq!(code(&mixsr(&["make-toy", "--dir", "t2", "--size", "30"], dir.path())), 1);
}
