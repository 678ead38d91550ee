//! End-to-end tests of the `promptlabel` binary: subcommands, exit codes,
//! and manifest-driven reproduction.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use promptlabel::synth::{generate_synthetic_dataset, SynthSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_promptlabel"))
}

fn make_dataset(dir: &Path, images: usize, seed: u64) -> Vec<String> {
    generate_synthetic_dataset(
        &SynthSpec {
            images,
            seed,
            ..Default::default()
        },
        dir,
    )
    .unwrap()
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn generate_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let ids = make_dataset(&root, 4, 11);
    let out = dir.path().join("labels");

    let output = run(bin()
        .arg("generate")
        .arg("--root")
        .arg(&root)
        .arg("--out")
        .arg(&out)
        .arg("--annotation")
        .arg("scribbles")
        .arg("--negatives")
        .arg("--iterative")
        .arg("--jobs")
        .arg("2"));
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    for id in &ids {
        assert!(out.join(format!("{id}.png")).is_file());
    }
    assert!(out.join("manifest.json").is_file());

    let output = run(bin()
        .arg("evaluate")
        .arg("--pred-dir")
        .arg(&out)
        .arg("--gt-dir")
        .arg(root.join("SegmentationClassAug")));
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("mIoU"), "stdout: {stdout}");
    assert!(stdout.contains("1.0000"), "stdout: {stdout}");
}

#[test]
fn manifest_reproduces_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let ids = make_dataset(&root, 3, 5);
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");

    let output = run(bin()
        .arg("generate")
        .arg("--root")
        .arg(&root)
        .arg("--out")
        .arg(&out1)
        .arg("--annotation")
        .arg("scribbles")
        .arg("--seed")
        .arg("42"));
    assert!(output.status.success());

    let output = run(bin()
        .arg("generate")
        .arg("--from-manifest")
        .arg(out1.join("manifest.json"))
        .arg("--out")
        .arg(&out2));
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    for id in &ids {
        let a = fs::read(out1.join(format!("{id}.png"))).unwrap();
        let b = fs::read(out2.join(format!("{id}.png"))).unwrap();
        assert_eq!(a, b, "{id} differs under manifest reproduction");
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    make_dataset(&root, 2, 3);
    let out = dir.path().join("labels");
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "root = {:?}\nannotation = \"boxes\"\nseed = 9\n",
            root.display().to_string()
        ),
    )
    .unwrap();

    let output = run(bin()
        .arg("generate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out));
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["annotation"], "boxes");
    assert_eq!(manifest["config"]["seed"], 9);
}

#[test]
fn config_error_exits_2() {
    let output = run(bin()
        .arg("generate")
        .arg("--root")
        .arg("/nonexistent")
        .arg("--cam-threshold")
        .arg("7.5"));
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(bin()
        .arg("generate")
        .arg("--root")
        .arg(dir.path())
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unreachable_backend_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    make_dataset(&root, 1, 0);
    let output = run(bin()
        .arg("generate")
        .arg("--root")
        .arg(&root)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--backend")
        .arg("external:tcp:127.0.0.1:1"));
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn backend_env_var_overrides_default() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    make_dataset(&root, 1, 0);
    let output = run(bin()
        .arg("generate")
        .arg("--root")
        .arg(&root)
        .arg("--out")
        .arg(dir.path().join("out"))
        .env("PROMPTLABEL_BACKEND", "external:tcp:127.0.0.1:1"));
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn ablate_empty_grid_emits_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    make_dataset(&root, 1, 0);
    let grid = dir.path().join("grid.toml");
    fs::write(&grid, "rows = []\n").unwrap();
    let work = dir.path().join("work");
    let csv = dir.path().join("results.csv");

    let output = run(bin()
        .arg("ablate")
        .arg("--root")
        .arg(&root)
        .arg("--grid")
        .arg(&grid)
        .arg("--work-dir")
        .arg(&work)
        .arg("--out-csv")
        .arg(&csv));
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let written = fs::read_to_string(&csv).unwrap();
    assert_eq!(
        written,
        "annotation,all_confident,sample_confident,iterative,negatives,miou_train\n"
    );
}

#[test]
fn export_protocol_docs_prints_contract() {
    let output = run(bin().arg("export-protocol-docs"));
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("row-major"));
    assert!(stdout.contains("points_pos"));
    assert!(stdout.contains("CAM1"));
}
