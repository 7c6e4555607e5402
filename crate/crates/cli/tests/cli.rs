use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 7
[dataset.synth]
n_modes = 2
n_classes = 3
samples_per_cell = 30
n_features = 6
[[classifiers]]
nodes_per_enhancement_group = 20
[[classifiers]]
nodes_per_enhancement_group = 25
seed = 1
"#;

fn evidiag(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evidiag"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn workdir() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

#[test]
fn compare_twice_is_byte_identical() {
    let (dir, _) = workdir();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(&evidiag(
            &["compare", "--config", "small.toml", "--out", out],
            d,
        ));
    }
    for f in [
        "report.json",
        "accuracy_table.csv",
        "events_ours.jsonl",
        "accuracy_ours.svg",
    ] {
        let a = std::fs::read(d.join("a").join(f)).unwrap();
        let b = std::fs::read(d.join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    let table = std::fs::read_to_string(d.join("a/accuracy_table.csv")).unwrap();
    assert!(table.starts_with("fault,ours:1,ours:2,scheme1:1,scheme1:2,scheme2:1,scheme2:2\n"));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn scheme_and_seed_flags_override_config() {
    let (dir, _) = workdir();
    let d = dir.path();
    ok(&evidiag(
        &[
            "compare",
            "--config",
            "small.toml",
            "--scheme",
            "scheme1",
            "--seed",
            "9",
            "--out",
            "r",
        ],
        d,
    ));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("r/report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 9);
    assert_eq!(report["reports"].as_array().unwrap().len(), 1);
    assert_eq!(report["reports"][0]["scheme"], "scheme1");
    assert!(!d.join("r/events_ours.jsonl").exists());
}

#[test]
fn train_stream_evaluate_round_trip() {
    let (dir, _) = workdir();
    let d = dir.path();
    ok(&evidiag(
        &["synth", "--config", "small.toml", "--out", "data/s.csv"],
        d,
    ));
    assert!(d.join("data/s.manifest.toml").exists());
    ok(&evidiag(
        &["train", "--config", "small.toml", "--out", "snaps"],
        d,
    ));
    let snaps = ["snaps/classifier_0.json", "snaps/classifier_1.json"];

    // frozen stream leaves the snapshots bit-identical
    let mut args = vec!["stream", "--snapshot"];
    args.extend(snaps);
    args.extend([
        "--input",
        "data/s.csv",
        "--gate",
        "1.01",
        "--log",
        "frozen.jsonl",
        "--save",
        "after",
    ]);
    ok(&evidiag(&args, d));
    for s in snaps {
        let name = Path::new(s).file_name().unwrap();
        assert_eq!(
            std::fs::read(d.join(s)).unwrap(),
            std::fs::read(d.join("after").join(name)).unwrap()
        );
    }
    let log = std::fs::read_to_string(d.join("frozen.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 180);
    for line in log.lines() {
        let ev: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(ev["status"], "gated");
    }

    let mut args = vec!["stream", "--snapshot"];
    args.extend(snaps);
    args.extend(["--input", "data/s.csv", "--log", "adaptive.jsonl"]);
    let out = evidiag(&args, d);
    ok(&out);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["updates_applied"], 180);
    assert!(summary["accuracy"].as_f64().unwrap() > 80.0);

    let mut args = vec!["evaluate", "--snapshot"];
    args.extend(snaps);
    args.extend(["--input", "data/s.csv"]);
    let out = evidiag(&args, d);
    ok(&out);
    let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(eval["classifier_accuracies"].as_array().unwrap().len(), 2);
}

#[test]
fn fuse_prints_combined_belief() {
    let (dir, _) = workdir();
    let d = dir.path();
    std::fs::write(
        d.join("e.jsonl"),
        "# two sources\n{\"weights\":1.0,\"beliefs\":[0.3,0.7]}\n",
    )
    .unwrap();
    let out = evidiag(&["fuse", "--evidence", "e.jsonl"], d);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["beliefs"], serde_json::json!([0.3, 0.7]));
    assert_eq!(v["predicted"], 1);
}

#[test]
fn exit_codes_follow_error_kind() {
    let (dir, _) = workdir();
    let d = dir.path();
    // config
    assert_eq!(
        evidiag(&["compare", "--config", "missing.toml"], d)
            .status
            .code(),
        Some(1)
    );
    std::fs::write(d.join("bad.toml"), "train_fraction = 2.0\n").unwrap();
    assert_eq!(
        evidiag(&["compare", "--config", "bad.toml"], d)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(evidiag(&["compare"], d).status.code(), Some(1));
    // data
    std::fs::write(d.join("csv.toml"), "[dataset.csv]\npath = 'nope.csv'\n").unwrap();
    assert_eq!(
        evidiag(&["compare", "--config", "csv.toml"], d)
            .status
            .code(),
        Some(2)
    );
    std::fs::write(
        d.join("e.jsonl"),
        "{\"weights\":1.0,\"beliefs\":[0.3,0.9]}\n",
    )
    .unwrap();
    let out = evidiag(&["fuse", "--evidence", "e.jsonl"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("e.jsonl:1"));
    // runtime
    std::fs::write(
        d.join("c.jsonl"),
        "{\"weights\":1,\"beliefs\":[1,0]}\n{\"weights\":1,\"beliefs\":[0,1]}\n",
    )
    .unwrap();
    assert_eq!(
        evidiag(&["fuse", "--evidence", "c.jsonl"], d).status.code(),
        Some(3)
    );
    // help is success
    assert_eq!(evidiag(&["--help"], d).status.code(), Some(0));
}
