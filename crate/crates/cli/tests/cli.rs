use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn desk() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

const SMALL: &[&str] = &[
    "--set",
    "population.legit=2",
    "--set",
    "population.rogue=1",
    "--set",
    "feature.image_size=24",
    "--set",
    "training.scratch.epochs=2",
    "--set",
    "training.transfer.epochs=2",
];

fn rffi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rffi")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rffi(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with_config<'a>(cfg: &'a str, args: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--config", cfg];
    v.extend_from_slice(SMALL);
    v.extend_from_slice(args);
    v
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn missing_config_exits_with_config_code() {
    let out = rffi(&["--config", "/nonexistent/x.toml", "simulate", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_override_exits_with_config_code() {
    let cfg = desk();
    let out = rffi(&["--config", p(&cfg), "--set", "population.colour=2", "simulate", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreadable_report_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("r.json");
    std::fs::write(&f, "{not json").unwrap();
    assert_eq!(rffi(&["report", "--input", p(&f)]).status.code(), Some(4));
    assert_eq!(rffi(&["report", "--input", p(&dir.path().join("none.json"))]).status.code(), Some(4));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    assert_eq!(rffi(&["simulate"]).status.code(), Some(2));
    assert_eq!(rffi(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn simulate_extract_train_attack_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = desk();
    let cfg = p(&cfg);
    let (caps, rogue_caps) = (d.join("caps"), d.join("rogue-caps"));
    let (feats, rogue_feats) = (d.join("feats"), d.join("rogue-feats"));

    let s = ok(&with_config(cfg, &["--seed", "4", "simulate", "--out", p(&caps), "--per-device", "6"]));
    assert!(s.starts_with("12 captures from 2 devices"), "{s}");
    ok(&with_config(cfg, &["simulate", "--out", p(&rogue_caps), "--per-device", "6", "--rogues"]));

    let s = ok(&with_config(cfg, &["extract", "--dataset", p(&caps), "--out", p(&feats)]));
    assert!(s.starts_with("12 quotient images"), "{s}");
    let clip = s.split('[').nth(1).unwrap().trim_end().trim_end_matches(']').replace(' ', "");
    ok(&with_config(
        cfg,
        &["extract", "--dataset", p(&rogue_caps), "--out", p(&rogue_feats), "--clip", &clip],
    ));

    let model = d.join("model");
    let log = d.join("log.csv");
    let s = ok(&with_config(cfg, &["train", "--features", p(&feats), "--out", p(&model), "--log", p(&log)]));
    assert!(s.contains("after 2 epochs"), "{s}");
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);

    let tuned = d.join("tuned");
    ok(&with_config(
        cfg,
        &["train", "--features", p(&feats), "--out", p(&tuned), "--mode", "transfer", "--base", p(&model)],
    ));

    let scenario = d.join("scenario.json");
    std::fs::write(
        &scenario,
        r#"{"kind":"contamination","target":"DUT-00","rogue":"ROGUE-00","seed":3}"#,
    )
    .unwrap();
    let attacked = d.join("attacked");
    let s = ok(&[
        "attack",
        "--scenario",
        p(&scenario),
        "--features",
        p(&feats),
        "--rogue-features",
        p(&rogue_feats),
        "--out",
        p(&attacked),
    ]);
    assert!(s.starts_with("12 items (6 claiming DUT-00 falsely)"), "{s}");

    // Transfer without a base model is a configuration mistake.
    let out = rffi(&with_config(cfg, &["train", "--features", p(&feats), "--out", p(&d.join("x")), "--mode", "transfer"]));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn experiment_writes_reports_and_detect_reads_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = desk();
    let sets = [
        "classification.base_samples=12",
        "classification.train_samples=[6, 12]",
        "classification.test_samples=8",
        "classification.impersonation_samples=12",
        "contamination.image_size=24",
        "contamination.train_samples=[6, 12]",
        "contamination.query_samples=4",
        "contamination.normal_pairs=2",
        "contamination.heldout_pairs=1",
        "contamination.attack_pairs=1",
        "contamination.matrices_per_pair=3",
        "contamination.vulnerability_samples=12",
        "contamination.detector.image_size=24",
        "contamination.detector.embed_dim=8",
        "contamination.detector.min_normals=6",
        "contamination.detector.epochs=2",
        "feature.clip_calibration=20",
    ];
    let mut args = with_config(p(&cfg), &[]);
    for s in &sets {
        args.extend(["--set", s]);
    }
    args.extend(["experiment", "--out", p(&out)]);
    let text = ok(&args);
    assert!(text.contains("classification accuracy"), "{text}");
    for f in ["report.json", "report.csv", "report.txt", "timing.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let report = out.join("report.json");
    let csv = ok(&["report", "--input", p(&report), "--format", "csv"]);
    assert_eq!(csv, std::fs::read_to_string(out.join("report.csv")).unwrap());
    let txt = ok(&["report", "--input", p(&report)]);
    assert_eq!(txt, std::fs::read_to_string(out.join("report.txt")).unwrap());
    let json = ok(&["report", "--input", p(&report), "--format", "json"]);
    assert!(json.trim_start().starts_with('{'));

    let caps = dir.path().join("query-caps");
    let feats = dir.path().join("query-feats");
    let cfg = p(&cfg);
    ok(&with_config(cfg, &["simulate", "--out", p(&caps), "--per-device", "4", "--split", "test"]));
    ok(&with_config(cfg, &["extract", "--dataset", p(&caps), "--out", p(&feats)]));
    let s = ok(&[
        "detect",
        "--detector",
        p(&out.join("detector-n12.bin")),
        "--transfer",
        p(&out.join("quotient-transfer.model")),
        "--scratch",
        p(&out.join("quotient-scratch.model")),
        "--features",
        p(&feats),
    ]);
    let mut lines = s.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("flag normal") || first.starts_with("flag anomaly"), "{first}");
    assert_eq!(lines.filter(|l| l.starts_with("margin DUT-")).count(), 2);
}
