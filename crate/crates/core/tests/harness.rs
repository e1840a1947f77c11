use std::path::PathBuf;

use rffi_core::feature::FeatureKind;
use rffi_core::harness::data::Pool;
use rffi_core::harness::{run_all, ExperimentConfig, Lab, Mode, Report};
use rffi_core::Error;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// A few devices, small images and two-epoch training: seconds per run.
fn tiny(extra: &[&str]) -> ExperimentConfig {
    let mut o: Vec<String> = [
        "name=\"tiny\"",
        "population.legit=3",
        "population.rogue=1",
        "feature.image_size=24",
        "feature.clip_calibration=20",
        "training.scratch.epochs=2",
        "training.transfer.epochs=2",
        "classification.base_samples=12",
        "classification.train_samples=[6, 12]",
        "classification.test_samples=8",
        "classification.impersonation_samples=12",
        "contamination.image_size=24",
        "contamination.train_samples=[6, 12]",
        "contamination.query_samples=4",
        "contamination.normal_pairs=2",
        "contamination.heldout_pairs=1",
        "contamination.attack_pairs=2",
        "contamination.matrices_per_pair=3",
        "contamination.vulnerability_samples=12",
        "contamination.detector.image_size=24",
        "contamination.detector.embed_dim=8",
        "contamination.detector.min_normals=6",
        "contamination.detector.epochs=2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    o.extend(extra.iter().map(|s| s.to_string()));
    ExperimentConfig::load_with(&config_path("desk.toml"), &o).unwrap()
}

#[test]
fn shipped_configs_parse() {
    let desk = ExperimentConfig::load(&config_path("desk.toml")).unwrap();
    assert_eq!(desk.population.legit, 5);
    assert_eq!(desk.feature.image_size, 64);
    let full = ExperimentConfig::load(&config_path("paper-scale.toml")).unwrap();
    assert_eq!(full.population.legit, 20);
    assert_eq!(full.feature.image_size, 256);
}

#[test]
fn overrides_reach_nested_fields() {
    let cfg = tiny(&["seed=9", "lora.spreading_factor=9"]);
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.lora.spreading_factor, 9);
    assert_eq!(cfg.classification.train_samples, vec![6, 12]);
    let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn bad_configs_are_config_errors() {
    let path = config_path("desk.toml");
    for o in ["population.colour=1", "classification.impersonation_samples=7", "population.legit=1", "novalue"] {
        let r = ExperimentConfig::load_with(&path, &[o.to_string()]);
        assert!(matches!(r, Err(Error::Config(_))), "{o}: {r:?}");
    }
    assert!(matches!(
        ExperimentConfig::load(&config_path("missing.toml")),
        Err(Error::Config(_))
    ));
}

#[test]
fn tiny_run_is_deterministic_and_renders() {
    let cfg = tiny(&[]);
    let a = run_all(&cfg).unwrap();
    let b = run_all(&cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());

    let back = Report::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);

    let csv = a.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scenario,metric,value");
    assert_eq!(lines.len(), a.metrics().len() + 1);
    assert!(csv.contains("classification/quotient/transfer/n12,accuracy,"));
    assert!(csv.contains("detection/n12,"));

    for m in a.metrics() {
        assert!(m.value.is_finite(), "{m:?}");
        if m.metric.ends_with("auc") || m.metric.ends_with("accuracy") || m.metric.ends_with("rate") {
            assert!((0.0..=1.0).contains(&m.value), "{m:?}");
        }
    }
    let k = a.contamination.as_ref().unwrap();
    assert_eq!(k.draws.len(), 2);
    assert_eq!(k.detection.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path()).unwrap();
    assert_eq!(Report::load(&dir.path().join("report.json")).unwrap(), a);
}

#[test]
fn seeds_change_the_corpus() {
    let (ca, cb) = (tiny(&["seed=1"]), tiny(&["seed=2"]));
    let a = Lab::new(&ca).unwrap();
    let b = Lab::new(&cb).unwrap();
    let first = |lab: &Lab| lab.corpus.legit[0].pool(Pool::EnvTrain)[0].seed;
    assert_ne!(first(&a), first(&b));
    assert_ne!(a.corpus.summary.clip, b.corpus.summary.clip);
}

#[test]
fn pools_are_disjoint() {
    let cfg = tiny(&[]);
    let lab = Lab::new(&cfg).unwrap();
    lab.corpus.check_split_hygiene().unwrap();
    assert_eq!(lab.corpus.legit.len(), 3);
    assert_eq!(lab.corpus.rogue.len(), 1);
    assert!(lab.corpus.rogue[0].id.starts_with("ROGUE"));
}

#[test]
fn cloned_rogues_cannot_be_told_apart() {
    let cfg = tiny(&[
        "population.clone_rogues=true",
        "classification.features=[\"quotient\"]",
        "classification.test_samples=40",
    ]);
    let mut lab = Lab::new(&cfg).unwrap();
    lab.run_classification().unwrap();
    let im = lab.run_impersonation().unwrap();
    let row = im.row(FeatureKind::Quotient, Mode::Transfer).unwrap();
    // Rogues copy the first legitimate device.
    let cloned = row.per_target[0];
    assert!((cloned - 0.5).abs() < 0.15, "{cloned}");
}
