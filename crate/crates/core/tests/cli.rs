//! Black-box tests of the command-line binary: exit codes, determinism,
//! config round trips, and agreement between emitted files and the library.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtmi::data::{Bag, BagCollection, BagLabel, Instance};
use mtmi::detectors::load_scores;
use mtmi::evaluation::{self, ScoredInstance};
use mtmi::simulator::{demo_library, GroundTruth};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mtmi"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn library_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo_library.csv")
}

/// Tiny two-class collection for fixture files.
fn small_collection(dim: usize, value_shift: f64) -> BagCollection {
    let mut bags = Vec::new();
    for b in 0..3 {
        let positive = b == 0;
        let instances = (0..4)
            .map(|i| {
                let v: Vec<f64> = (0..dim)
                    .map(|d| {
                        let base = (b * 4 + i) as f64 * 0.37 + d as f64 * 0.11 + value_shift;
                        if positive && i == 0 { base + 3.0 } else { base.sin() }
                    })
                    .collect();
                Instance::new(v).unwrap()
            })
            .collect();
        let label = if positive { BagLabel::Positive } else { BagLabel::Negative };
        bags.push(Bag::new(b as i64, label, instances).unwrap());
    }
    BagCollection::new(bags).unwrap()
}

#[test]
fn zero_targets_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--bags",
        "does_not_matter.csv",
        "--k",
        "0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
}

#[test]
fn missing_required_flag_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr_of(&out).contains("--bags"),
        "stderr should name the missing flag: {}",
        stderr_of(&out)
    );
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--preset",
        "mars",
        "--library",
        library_path().to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("mars"), "stderr: {}", stderr_of(&out));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "bogus_knob=1\n").unwrap();
    let out = run(&[
        "train",
        "--bags",
        "x.csv",
        "--config",
        conf.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr_of(&out).contains("bogus_knob"),
        "stderr should name the unknown key: {}",
        stderr_of(&out)
    );
}

#[test]
fn out_of_range_far_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "eval",
        "--scores",
        "s.csv",
        "--truth",
        "t.csv",
        "--far",
        "0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--far"), "stderr: {}", stderr_of(&out));
}

#[test]
fn dimension_mismatch_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("model");
    let bags4 = dir.path().join("bags4.csv");
    small_collection(4, 0.0).save_csv(&bags4).unwrap();
    let out = run(&[
        "train",
        "--bags",
        bags4.to_str().unwrap(),
        "--k",
        "1",
        "--alpha",
        "0",
        "--out-dir",
        train_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let bags5 = dir.path().join("bags5.csv");
    small_collection(5, 0.2).save_csv(&bags5).unwrap();
    let out = run(&[
        "detect",
        "--bags",
        bags5.to_str().unwrap(),
        "--dictionary",
        train_dir.join("dictionary.csv").to_str().unwrap(),
        "--stats",
        train_dir.join("background_stats.csv").to_str().unwrap(),
        "--out-dir",
        dir.path().join("scores").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("bags5.csv"), "stderr should name the offending file: {err}");
}

#[test]
fn single_class_truth_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    std::fs::write(
        &scores,
        "bag_id,instance_index,score\n1,0,5.0e-1\n1,1,2.5e-1\n",
    )
    .unwrap();
    let truth = dir.path().join("truth.csv");
    std::fs::write(
        &truth,
        "bag_id,instance_index,target_name,proportion\n1,0,,0\n1,1,,0\n",
    )
    .unwrap();
    let out = run(&[
        "eval",
        "--scores",
        scores.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--out-dir",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr_of(&out));
}

#[test]
fn simulate_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--library".into(),
            library_path().to_str().unwrap().into(),
            "--pos-bags".into(),
            "3".into(),
            "--neg-bags".into(),
            "4".into(),
            "--points-per-bag".into(),
            "20".into(),
            "--targets-per-bag".into(),
            "10".into(),
            "--seed".into(),
            "7".into(),
            "--out-dir".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let result = bin().args(args(out)).output().unwrap();
        assert!(result.status.success(), "stderr: {}", stderr_of(&result));
    }
    for name in ["train.csv", "test.csv", "train_truth.csv", "test_truth.csv"] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let bags = dir.path().join("bags.csv");
    small_collection(4, 0.0).save_csv(&bags).unwrap();

    let first = dir.path().join("first");
    let out = run(&[
        "train",
        "--bags",
        bags.to_str().unwrap(),
        "--k",
        "2",
        "--alpha",
        "0.5",
        "--seed",
        "3",
        "--out-dir",
        first.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let second = dir.path().join("second");
    let out = run(&[
        "train",
        "--config",
        first.join("train.resolved.conf").to_str().unwrap(),
        "--out-dir",
        second.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    for name in [
        "dictionary.csv",
        "dictionary_whitened.csv",
        "background_stats.csv",
        "trace.csv",
    ] {
        let left = std::fs::read(first.join(name)).unwrap();
        let right = std::fs::read(second.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs after config round trip");
    }
}

#[test]
fn summary_agrees_with_the_library_on_emitted_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = run(&[
        "pipeline",
        "--library",
        library_path().to_str().unwrap(),
        "--pos-bags",
        "4",
        "--neg-bags",
        "6",
        "--points-per-bag",
        "50",
        "--targets-per-bag",
        "25",
        "--k",
        "2",
        "--alpha",
        "1",
        "--seed",
        "5",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let rows = load_scores(&out_dir.join("scores.csv")).unwrap();
    let truth = GroundTruth::load_csv(&out_dir.join("test_truth.csv")).unwrap();
    let map = truth.index_map();
    let scored: Vec<ScoredInstance> = rows
        .iter()
        .map(|r| {
            let rec = map[&(r.bag_id, r.instance_index)];
            ScoredInstance::new(r.score, rec.proportion > 0.0)
        })
        .collect();
    let curve = evaluation::roc_curve(&scored).unwrap();
    let expected = evaluation::nauc(&curve, 1e-3).unwrap();

    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let mut reported = None;
    for line in summary.lines() {
        if let Some(value) = line.strip_prefix("nauc,") {
            reported = Some(value.parse::<f64>().unwrap());
            break;
        }
    }
    let reported = reported.expect("summary.csv has an overall nauc row");
    assert!(
        (reported - expected).abs() <= 1e-12,
        "summary nauc {reported} vs library {expected}"
    );
    for target in truth.target_names() {
        assert!(
            summary.lines().any(|l| l.starts_with(&format!("nauc_{target},"))),
            "summary.csv lacks a row for {target}"
        );
    }
}

#[test]
fn bundled_library_file_matches_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let fresh = dir.path().join("library.csv");
    demo_library().save_csv(&fresh).unwrap();
    let generated = std::fs::read(&fresh).unwrap();
    let bundled = std::fs::read(library_path()).unwrap();
    assert_eq!(generated, bundled, "data/demo_library.csv is stale; regenerate it");
}
