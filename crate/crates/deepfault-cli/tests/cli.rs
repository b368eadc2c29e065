//! End-to-end behaviour of the `deepfault` binary on a small synthetic
//! dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deepfault"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawning deepfault");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_idx_images(path: &Path, images: &[Vec<u8>], side: u32) {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&side.to_be_bytes());
    bytes.extend_from_slice(&side.to_be_bytes());
    for img in images {
        bytes.extend_from_slice(img);
    }
    fs::write(path, bytes).unwrap();
}

fn write_idx_labels(path: &Path, labels: &[u8]) {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    fs::write(path, bytes).unwrap();
}

/// Three linearly separable 4x4 "digit" classes: a bright band in rows 0, 1
/// or 2, plus light noise.
fn synth_dataset(dir: &Path, per_class: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |count: usize| {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3u8 {
            for _ in 0..count {
                let mut img = vec![0u8; 16];
                for px in img.iter_mut() {
                    *px = rng.random_range(0..40);
                }
                for col in 0..4 {
                    img[c as usize * 4 + col] = rng.random_range(200..=255);
                }
                images.push(img);
                labels.push(c);
            }
        }
        (images, labels)
    };
    let (train_imgs, train_labels) = make(per_class);
    let (test_imgs, test_labels) = make(per_class / 2);
    write_idx_images(&dir.join("train-images-idx3-ubyte"), &train_imgs, 4);
    write_idx_labels(&dir.join("train-labels-idx1-ubyte"), &train_labels);
    write_idx_images(&dir.join("t10k-images-idx3-ubyte"), &test_imgs, 4);
    write_idx_labels(&dir.join("t10k-labels-idx1-ubyte"), &test_labels);
}

struct Pipeline {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    model: PathBuf,
}

fn trained_pipeline() -> Pipeline {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let data = root.join("data");
    fs::create_dir_all(&data).unwrap();
    synth_dataset(&data, 20, 42);
    let train_dir = root.join("train");
    run_ok(bin().args([
        "train",
        "--data-dir",
        data.to_str().unwrap(),
        "--arch",
        "2x6",
        "--lr",
        "0.3",
        "--batch",
        "4",
        "--epochs",
        "40",
        "--seed",
        "1",
        "--out",
        train_dir.to_str().unwrap(),
    ]));
    Pipeline {
        _tmp: tmp,
        model: train_dir.join("model.json"),
        root,
        data,
    }
}

#[test]
fn full_pipeline_produces_all_artifacts() {
    let p = trained_pipeline();
    assert!(p.model.exists());
    assert!(p.root.join("train/manifest.json").exists());

    let analyze = p.root.join("analyze");
    run_ok(bin().args([
        "analyze",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--out",
        analyze.to_str().unwrap(),
    ]));
    for c in 0..3 {
        let csv = fs::read_to_string(analyze.join(format!("spectrum_class_{c}.csv"))).unwrap();
        assert!(csv.starts_with("layer,neuron,as,af,ns,nf\n"));
        // 2x6 architecture: 12 hidden neurons
        assert_eq!(csv.lines().count(), 13);
    }

    let rank = p.root.join("rank");
    run_ok(bin().args([
        "rank",
        "--spectra",
        analyze.to_str().unwrap(),
        "--model",
        p.model.to_str().unwrap(),
        "--measure",
        "ochiai",
        "--k",
        "3",
        "--out",
        rank.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rank.join("report_class_0.json")).unwrap())
            .unwrap();
    assert_eq!(report["measure"], "ochiai");
    assert_eq!(report["k"], 3);
    assert_eq!(report["neurons"].as_array().unwrap().len(), 12);

    let synth = p.root.join("synth");
    run_ok(bin().args([
        "synthesize",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--reports",
        rank.to_str().unwrap(),
        "--per-class",
        "5",
        "--out",
        synth.to_str().unwrap(),
    ]));
    for f in ["synth.csv", "originals.f64", "synthesized.f64", "vectors.json", "selection.json"] {
        assert!(synth.join(f).exists(), "missing {f}");
    }

    let eval = p.root.join("eval");
    run_ok(bin().args([
        "evaluate",
        "--model",
        p.model.to_str().unwrap(),
        "--run",
        synth.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("eval_summary.json")).unwrap())
            .unwrap();
    assert!(summary["accuracy"].as_f64().unwrap() <= 1.0);
    let counts: usize = summary["per_layer_counts"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap() as usize)
        .sum();
    assert_eq!(counts, 9); // 3 classes x k=3
    assert!(eval.join("layer_distribution.csv").exists());
    assert!(
        fs::read_to_string(eval.join("layer_distribution.svg"))
            .unwrap()
            .starts_with("<svg")
    );
}

#[test]
fn analyze_whole_set_with_class_all() {
    let p = trained_pipeline();
    let analyze = p.root.join("analyze_all");
    run_ok(bin().args([
        "analyze",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--class",
        "all",
        "--out",
        analyze.to_str().unwrap(),
    ]));
    assert!(analyze.join("spectrum_class_all.csv").exists());
    assert!(!analyze.join("spectrum_class_0.csv").exists());
}

#[test]
fn data_dir_comes_from_the_environment() {
    let p = trained_pipeline();
    let analyze = p.root.join("analyze_env");
    run_ok(bin()
        .env("DEEPFAULT_DATA_DIR", p.data.to_str().unwrap())
        .args([
            "analyze",
            "--model",
            p.model.to_str().unwrap(),
            "--out",
            analyze.to_str().unwrap(),
        ]));
    assert!(analyze.join("spectrum_class_0.csv").exists());
}

#[test]
fn missing_model_file_exits_with_io_code() {
    let p = trained_pipeline();
    let out = bin()
        .args([
            "analyze",
            "--model",
            "/nonexistent/model.json",
            "--data-dir",
            p.data.to_str().unwrap(),
            "--out",
            p.root.join("x").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_of_range_k_exits_with_validation_code() {
    let p = trained_pipeline();
    let analyze = p.root.join("analyze_k");
    run_ok(bin().args([
        "analyze",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--out",
        analyze.to_str().unwrap(),
    ]));
    let out = bin()
        .args([
            "rank",
            "--spectra",
            analyze.to_str().unwrap(),
            "--model",
            p.model.to_str().unwrap(),
            "--measure",
            "ochiai",
            "--k",
            "1000",
            "--out",
            p.root.join("rank_k").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dstar_defaults_to_exponent_three() {
    let p = trained_pipeline();
    let analyze = p.root.join("analyze_d");
    run_ok(bin().args([
        "analyze",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--out",
        analyze.to_str().unwrap(),
    ]));
    let rank = p.root.join("rank_d");
    run_ok(bin().args([
        "rank",
        "--spectra",
        analyze.to_str().unwrap(),
        "--model",
        p.model.to_str().unwrap(),
        "--measure",
        "dstar",
        "--k",
        "2",
        "--out",
        rank.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rank.join("report_class_1.json")).unwrap())
            .unwrap();
    assert_eq!(report["star"], 3.0);
}

#[test]
fn random_measure_defaults_to_five_repetitions() {
    let p = trained_pipeline();
    let analyze = p.root.join("analyze_r");
    run_ok(bin().args([
        "analyze",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--out",
        analyze.to_str().unwrap(),
    ]));
    let rank = p.root.join("rank_r");
    run_ok(bin().args([
        "rank",
        "--spectra",
        analyze.to_str().unwrap(),
        "--model",
        p.model.to_str().unwrap(),
        "--measure",
        "random",
        "--k",
        "2",
        "--seed",
        "9",
        "--out",
        rank.to_str().unwrap(),
    ]));
    for rep in 0..5 {
        assert!(rank.join(format!("rep{rep}/report_class_0.json")).exists());
    }
}

#[test]
fn synthesize_records_default_distance_bound() {
    let p = trained_pipeline();
    let analyze = p.root.join("an_s");
    let rank = p.root.join("rk_s");
    let synth = p.root.join("sy_s");
    run_ok(bin().args([
        "analyze",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--out",
        analyze.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "rank",
        "--spectra",
        analyze.to_str().unwrap(),
        "--model",
        p.model.to_str().unwrap(),
        "--measure",
        "tarantula",
        "--k",
        "2",
        "--out",
        rank.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "synthesize",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--reports",
        rank.to_str().unwrap(),
        "--per-class",
        "2",
        "--out",
        synth.to_str().unwrap(),
    ]));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(synth.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["d"], 0.1);
    assert_eq!(manifest["config"]["step"], 1.0);
}

#[test]
fn comparing_a_run_with_itself_gives_p_one() {
    let p = trained_pipeline();
    let analyze = p.root.join("an_c");
    let rank = p.root.join("rk_c");
    let synth = p.root.join("sy_c");
    let eval = p.root.join("ev_c");
    run_ok(bin().args([
        "analyze",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--out",
        analyze.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "rank",
        "--spectra",
        analyze.to_str().unwrap(),
        "--model",
        p.model.to_str().unwrap(),
        "--measure",
        "ochiai",
        "--k",
        "2",
        "--out",
        rank.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "synthesize",
        "--model",
        p.model.to_str().unwrap(),
        "--data-dir",
        p.data.to_str().unwrap(),
        "--reports",
        rank.to_str().unwrap(),
        "--per-class",
        "3",
        "--out",
        synth.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "evaluate",
        "--model",
        p.model.to_str().unwrap(),
        "--run",
        synth.to_str().unwrap(),
        "--compare",
        synth.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(eval.join("mann_whitney.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "metric,n_a,n_b,u,p_two_sided");
    for line in lines {
        let p_value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(p_value, 1.0, "line {line}");
    }
}
