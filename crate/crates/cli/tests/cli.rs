use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::{Array1, Array2};
use vmfkd::activation_model::{derive_model, export_prior};
use vmfkd::data::{write_idx, Dataset, Split};
use vmfkd::directional::mean_resultant_length;
use vmfkd::nn::{load_checkpoint, save_checkpoint, Activation, Layer, Network};

fn vmfkd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmfkd")).args(args).current_dir(cwd).output().expect("spawn vmfkd")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// 4 classes of 8×8 images, each lighting one quadrant.
fn write_images(dir: &Path, n_per_class: usize) {
    let n = 4 * n_per_class;
    let mut f = Array2::zeros((n, 64));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 4;
        labels.push(c);
        for r in 0..8 {
            for col in 0..8 {
                let lit = (r / 4) * 2 + col / 4 == c;
                let jitter = ((i * 37 + r * 11 + col * 5) % 17) as f64 / 40.0;
                f[[i, r * 8 + col]] = if lit { 0.9 - jitter } else { jitter / 2.0 };
            }
        }
    }
    let ds = Dataset::new(f, labels, 4, Split::Train).unwrap().with_image_side(8).unwrap();
    write_idx(&ds, dir.join("train-images.gz"), dir.join("train-labels.gz")).unwrap();
    write_idx(&ds, dir.join("test-images.gz"), dir.join("test-labels.gz")).unwrap();
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        r#"out_dir = "out"

[data]
train_images = "train-images.gz"
train_labels = "train-labels.gz"
test_images = "test-images.gz"
test_labels = "test-labels.gz"

[teacher]
layers = [64, 16, 8, 4]
seed = 1

[teacher.train]
epochs = 8
learning_rate = 0.01
batch_size = 16
weight_decay = 0.0

[derive]
kappa = 10.0
samples_per_class = 256

[student]
layers = [64, 8, 4, 4]

[student.train]
epochs = 1
batch_size = 16

[distill]
modes = ["label", "kd", "ckd"]
seeds = [0]
save_students = false

[[shifts]]
kind = "none"
"#,
    )
    .unwrap();
    path
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    write_images(dir.path(), 10);
    let cfg = write_config(dir.path());
    (dir, cfg)
}

fn train_and_derive(dir: &Path) {
    let o = vmfkd(&["train-teacher", "-c", "run.toml"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = vmfkd(&["derive", "-c", "run.toml"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn help_lists_every_subcommand() {
    let o = vmfkd(&["--help"], Path::new("."));
    let text = stdout(&o);
    for cmd in ["train-teacher", "derive", "distill", "inspect", "viz", "sample"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn train_teacher_writes_checkpoint_and_resolved_config() {
    let (dir, _) = setup();
    let o = vmfkd(&["train-teacher", "-c", "run.toml", "--set", "teacher.train.epochs=2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("test accuracy:"));
    assert!(dir.path().join("out/teacher.ckpt").exists());
    let resolved = fs::read_to_string(dir.path().join("out/resolved_train-teacher.toml")).unwrap();
    assert!(resolved.contains("epochs = 2"), "{resolved}");
}

#[test]
fn zero_epochs_saves_the_initial_network() {
    let (dir, _) = setup();
    let o = vmfkd(&["train-teacher", "-c", "run.toml", "--epochs", "0", "--seed", "5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let saved = load_checkpoint(dir.path().join("out/teacher.ckpt")).unwrap();
    let fresh = Network::random(&[64, 16, 8, 4], Activation::Relu, false, 5).unwrap();
    assert_eq!(saved.parameters(), fresh.parameters());
}

#[test]
fn missing_dataset_names_the_path() {
    let (dir, _) = setup();
    let o = vmfkd(&["train-teacher", "-c", "run.toml", "--set", "data.train_images=\"nope/missing.gz\""], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nope/missing.gz"), "{}", stderr(&o));
}

#[test]
fn config_errors_use_their_own_exit_code() {
    let (dir, _) = setup();
    let o = vmfkd(&["train-teacher", "-c", "run.toml", "--set", "teacher.bogus=1"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = vmfkd(&["train-teacher", "-c", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn derive_is_deterministic_and_diagonal_dominant() {
    let (dir, _) = setup();
    train_and_derive(dir.path());
    let first = fs::read(dir.path().join("out/relations.csv")).unwrap();
    let o = vmfkd(&["derive", "-c", "run.toml"], dir.path());
    assert!(o.status.success());
    assert_eq!(fs::read(dir.path().join("out/relations.csv")).unwrap(), first);
    assert!(stdout(&o).contains("diagonal-dominant rows: 4/4"), "{}", stdout(&o));
    assert!(dir.path().join("out/relations.csv.meta.toml").exists());
    assert!(fs::read_to_string(dir.path().join("out/prior.toml")).unwrap().contains("kappa = 10.0"));
}

#[test]
fn derive_near_zero_kappa_gives_flat_rows() {
    let (dir, _) = setup();
    train_and_derive(dir.path());
    let o = vmfkd(&["derive", "-c", "run.toml", "--kappa", "1e-6", "--temperature", "1000"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("out/relations.csv")).unwrap();
    for line in text.lines().skip(1) {
        for v in line.split(',') {
            assert!((v.parse::<f64>().unwrap() - 0.25).abs() < 0.01, "{line}");
        }
    }
}

#[test]
fn derive_reports_zero_prototype_class() {
    let dir = tempfile::tempdir().unwrap();
    let hidden = vec![Layer { weights: Array2::from_elem((3, 2), 0.5), bias: Array1::zeros(2), activation: Activation::Tanh }];
    let mut w = Array2::from_elem((2, 3), 1.0);
    w.column_mut(1).fill(0.0);
    let net = Network::from_parts(hidden, w, None).unwrap();
    save_checkpoint(&net, dir.path().join("t.ckpt")).unwrap();
    let o = vmfkd(&["derive", "--checkpoint", "t.ckpt", "--kappa", "80", "--out-dir", "o"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("class 1"), "{}", stderr(&o));
}

#[test]
fn distill_grid_has_one_row_per_run() {
    let (dir, _) = setup();
    train_and_derive(dir.path());
    let o = vmfkd(
        &[
            "distill",
            "-c",
            "run.toml",
            "--seeds",
            "0,1,2,3,4",
            "--set",
            "shifts=[{kind=\"none\"},{kind=\"photometric\",degree=0.4},{kind=\"photometric\",degree=0.8}]",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let runs = fs::read_to_string(dir.path().join("out/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 45);
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 9);
    let metrics = fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert!(metrics.starts_with("mode,shift_kind,shift_param,seed,epoch,train_loss,eval_accuracy\n"));
}

#[test]
fn ckd_survives_deleted_teacher_but_kd_does_not() {
    let (dir, _) = setup();
    train_and_derive(dir.path());
    fs::remove_file(dir.path().join("out/teacher.ckpt")).unwrap();
    let o = vmfkd(&["distill", "-c", "run.toml", "--modes", "ckd", "--set", "distill.save_students=true"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out/students/ckd_none_0_seed0.ckpt").exists());

    let o = vmfkd(&["distill", "-c", "run.toml", "--modes", "label,kd,ckd"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("kd none 0 seed 0") && err.contains("teacher.ckpt"), "{err}");
    // The other modes still ran.
    let runs = fs::read_to_string(dir.path().join("out/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 3);
}

#[test]
fn inspect_reports_accuracy_drop_and_gap() {
    let (dir, _) = setup();
    let o = vmfkd(&["train-teacher", "-c", "run.toml", "--epochs", "0"], dir.path());
    assert!(o.status.success());
    let o = vmfkd(&["inspect", "-c", "run.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for key in ["normalized accuracy", "drop", "prototype norms", "activation norm", "gen/disc gap"] {
        assert!(text.contains(key), "{key}: {text}");
    }
}

#[test]
fn viz_rejects_wide_penultimate_and_exports_planar() {
    let (dir, _) = setup();
    train_and_derive(dir.path());
    let o = vmfkd(&["viz", "-c", "run.toml", "--checkpoint", "out/teacher.ckpt", "--out-dir", "v"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("2-dimensional"), "{}", stderr(&o));

    let o = vmfkd(
        &["train-teacher", "-c", "run.toml", "--set", "teacher.layers=[64,16,2,4]", "--set", "teacher.penultimate_activation=\"identity\""],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = vmfkd(&["viz", "-c", "run.toml", "--checkpoint", "out/teacher.ckpt", "--out-dir", "v", "--kappa", "20", "--svg"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["activations.csv", "density.csv", "polar.svg"] {
        assert!(dir.path().join("v").join(f).exists(), "{f}");
    }
}

fn write_prior(dir: &Path, kappa: f64) -> PathBuf {
    let w = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 0.5, -0.5]).unwrap();
    let path = dir.join("prior.toml");
    export_prior(&derive_model(w.view(), kappa, false).unwrap(), &path).unwrap();
    path
}

fn read_rows(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    (header, lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect())
}

#[test]
fn sample_matches_bessel_ratio() {
    let dir = tempfile::tempdir().unwrap();
    write_prior(dir.path(), 5.0);
    let o = vmfkd(&["sample", "--prior", "prior.toml", "--class", "1", "-n", "1000", "--seed", "3", "-o", "s.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_rows(&dir.path().join("s.csv"));
    assert_eq!(header, "x0,x1,x2");
    assert_eq!(rows.len(), 1000);
    let mut mean = [0.0; 3];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / 1000.0;
        }
    }
    let rbar = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    assert!((rbar - mean_resultant_length(3, 5.0)).abs() < 0.05, "{rbar}");
}

#[test]
fn sample_scale_and_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    write_prior(dir.path(), 20.0);
    let o = vmfkd(&["sample", "--prior", "prior.toml", "--class", "0", "-n", "50", "--scale", "10", "-o", "s.csv"], dir.path());
    assert!(o.status.success());
    let (_, rows) = read_rows(&dir.path().join("s.csv"));
    for r in rows {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 10.0).abs() < 1e-8, "{n}");
    }
    let o = vmfkd(&["sample", "--prior", "prior.toml", "--class", "0", "-n", "0"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o), "x0,x1,x2\n");
    let o = vmfkd(&["sample", "--prior", "prior.toml", "--class", "3", "-n", "5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("class 3"));
}
