//! `rffi`: command-line front end of the testbed.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use rffi_core::attacks::{
    contaminate_enrollment, impersonation_testset, AttackKind, AttackScenario, LabeledFeatureSet,
    LabeledItem, Split,
};
use rffi_core::classifier::{ArchSpec, TrainedModel, TrainingSet};
use rffi_core::detection::{posterior_difference, true_positive_margin, OneClassDetector};
use rffi_core::feature::store::{self, FeatureManifest, ItemLabel};
use rffi_core::feature::{analyze_capture, rasterize, ClipRange, FeatureImage, FeatureKind};
use rffi_core::harness::data::{calibrate, capture_seed, population, simulate, Pool};
use rffi_core::harness::report::{Report, Timing};
use rffi_core::harness::{ExperimentConfig, Lab};
use rffi_core::signal::dataset::{load_capture, read_manifest, DatasetWriter};
use rffi_core::signal::Environment;
use rffi_core::{Error, Result};

const EXIT_CONFIG: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_METRIC: u8 = 5;

#[derive(Parser)]
#[command(name = "rffi", version, about = "Simulated LoRa RF fingerprinting testbed")]
struct Cli {
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set population.legit=8`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Base seed; replaces the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Quotient,
    Spectrogram,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Scratch,
    Transfer,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate capture pairs for the configured population.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Channel environment; the configured deployment one by default.
        #[arg(long)]
        env: Option<Environment>,
        #[arg(long, default_value_t = 10)]
        per_device: usize,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Simulate the rogue devices instead of the legitimate ones.
        #[arg(long)]
        rogues: bool,
    },
    /// Turn a capture dataset into quantized feature images.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "quotient")]
        kind: KindArg,
        /// Quantizer range `LO,HI`; calibrated on the dataset when omitted.
        #[arg(long, value_parser = parse_clip)]
        clip: Option<ClipRange>,
        /// Reference correlation; enables the distorted-preamble filter.
        #[arg(long)]
        rho_ref: Option<f64>,
    },
    /// Train a classifier on a feature dataset.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "scratch")]
        mode: ModeArg,
        /// Chamber-trained model to start from (transfer mode).
        #[arg(long)]
        base: Option<PathBuf>,
        /// Per-epoch loss and accuracy CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Build an attacked feature set from a scenario file.
    Attack {
        #[arg(long)]
        scenario: PathBuf,
        /// Legitimate features (enrollment for contamination, test set for
        /// impersonation).
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        rogue_features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a transfer/scratch classifier pair with a trained detector.
    Detect {
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        transfer: PathBuf,
        #[arg(long)]
        scratch: PathBuf,
        /// Query features with true labels.
        #[arg(long)]
        features: PathBuf,
    },
    /// Run the classification, impersonation and contamination experiments.
    Experiment {
        /// Output directory; the configured one by default.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip writing models, detectors and embedding tables.
        #[arg(long)]
        no_artifacts: bool,
    },
    /// Render a saved report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn parse_clip(s: &str) -> std::result::Result<ClipRange, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    let c = ClipRange { lo, hi };
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Metric(_) => EXIT_METRIC,
        _ => EXIT_DATA,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load_with(p, &cli.overrides)?,
        None => ExperimentConfig::from_toml_with("", &cli.overrides)?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn feature_kind(k: KindArg) -> FeatureKind {
    match k {
        KindArg::Quotient => FeatureKind::Quotient,
        KindArg::Spectrogram => FeatureKind::Spectrogram,
    }
}

fn simulate_cmd(cfg: &ExperimentConfig, out: &Path, env: Option<Environment>, per_device: usize, split: SplitArg, rogues: bool) -> Result<()> {
    let env = env.unwrap_or(cfg.classification.environment);
    let pop = population(cfg)?;
    let (devices, offset) = if rogues { (&pop.rogue, pop.legit.len()) } else { (&pop.legit, 0) };
    if devices.is_empty() {
        return Err(Error::Config("no devices to simulate".into()));
    }
    let (pool, split_name) = match (split, env == Environment::Chamber) {
        (SplitArg::Train, true) => (Pool::ChamberTrain, "train"),
        (SplitArg::Test, true) => (Pool::ChamberTest, "test"),
        (SplitArg::Train, false) => (Pool::EnvTrain, "train"),
        (SplitArg::Test, false) => (Pool::EnvTest, "test"),
    };
    let mut w = DatasetWriter::create(out)?;
    for (i, dev) in devices.iter().enumerate() {
        for slot in 0..per_device {
            let s = capture_seed(cfg.seed, offset + i, pool, slot, 0);
            let pair = simulate(cfg, dev, env, s)?;
            w.write(&format!("{}-{split_name}-{slot:04}", dev.device_id), &pair, Some(split_name))?;
        }
    }
    w.finish()?;
    println!("{} captures from {} devices written to {}", devices.len() * per_device, devices.len(), out.display());
    Ok(())
}

fn extract_cmd(cfg: &ExperimentConfig, dataset: &Path, out: &Path, kind: FeatureKind, clip: Option<ClipRange>, rho_ref: Option<f64>) -> Result<()> {
    let records = read_manifest(dataset)?;
    rffi_core::signal::dataset::check_split_hygiene(&records)?;
    let rows = cfg.feature.rows_for(&cfg.lora);
    let mut kept = Vec::new();
    let mut rejected = 0;
    for r in &records {
        let pair = load_capture(dataset, r)?;
        let a = analyze_capture(&pair, &cfg.feature, &rows)?;
        let pass = match (a.rho, rho_ref) {
            (Some(rho), Some(reference)) => (reference - rho).abs() <= cfg.feature.theta,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if pass {
            kept.push((r, a));
        } else {
            rejected += 1;
        }
    }
    if kept.is_empty() {
        return Err(Error::Input("no capture passed the filter".into()));
    }
    let clip = match clip {
        Some(c) => c,
        None => {
            let n = cfg.feature.clip_calibration.min(kept.len());
            let analyses: Vec<_> = kept[..n].iter().map(|(_, a)| a.clone()).collect();
            let [lo, hi] = cfg.feature.clip_percentiles;
            calibrate(&analyses, kind, lo, hi)?
        }
    };
    let images = kept
        .iter()
        .map(|(_, a)| rasterize(a.matrix(kind), clip, cfg.feature.image_size, cfg.feature.depth, kind))
        .collect::<Result<Vec<_>>>()?;
    let splits: BTreeSet<&str> = kept.iter().filter_map(|(r, _)| r.split.as_deref()).collect();
    let manifest = FeatureManifest {
        kind,
        encoding: store::Encoding::U8,
        shape: [0; 3],
        depth: None,
        split: splits.into_iter().collect::<Vec<_>>().join("+"),
        clip: Some(clip),
        theta: cfg.feature.theta,
        stft: cfg.feature.stft,
        labels: kept
            .iter()
            .map(|(r, _)| ItemLabel { claimed: r.claimed_id.clone(), truth: r.device_id.clone(), capture_seed: r.seed })
            .collect(),
    };
    store::write_images(out, manifest, &images)?;
    println!(
        "{} {} images written to {} ({} rejected), clip [{:.4}, {:.4}]",
        images.len(),
        kind.name(),
        out.display(),
        rejected,
        clip.lo,
        clip.hi
    );
    Ok(())
}

fn read_features(dir: &Path) -> Result<(FeatureManifest, Vec<FeatureImage>)> {
    store::read_images(dir)
}

fn train_cmd(cfg: &ExperimentConfig, features: &Path, out: &Path, mode: ModeArg, base: Option<&Path>, log: Option<&Path>) -> Result<()> {
    let (manifest, images) = read_features(features)?;
    let claimed: Vec<&str> = manifest.labels.iter().map(|l| l.claimed.as_str()).collect();
    let (model, epochs) = match mode {
        ModeArg::Scratch => {
            let classes: Vec<String> = claimed.iter().copied().collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
            let set = TrainingSet::new(images.iter().zip(claimed.iter().copied()), &classes)?;
            let arch = ArchSpec::standard(set.size, classes.len());
            let h = rffi_core::classifier::TrainHyper { seed: cfg.seed, ..cfg.training.scratch.clone() };
            TrainedModel::build(&arch, classes, cfg.seed)?.train_scratch(&set, &h)?
        }
        ModeArg::Transfer => {
            let base = base.ok_or_else(|| Error::Config("transfer mode needs --base".into()))?;
            let base = TrainedModel::load(base)?;
            let set = TrainingSet::new(images.iter().zip(claimed.iter().copied()), &base.class_labels)?;
            let h = rffi_core::classifier::TrainHyper { seed: cfg.seed, ..cfg.training.transfer.clone() };
            TrainedModel::transfer(&base, &set, &h)?
        }
    };
    model.save(out)?;
    if let Some(p) = log {
        rffi_core::classifier::write_log_csv(p, &epochs)?;
    }
    let last = epochs.last().map_or(f64::NAN, |e| e.accuracy);
    println!("model {} written to {} after {} epochs (training accuracy {last:.3})", model.id(), out.display(), epochs.len());
    Ok(())
}

/// Items carry their capture seed alongside the image.
type Item = (FeatureImage, u64);

fn labeled(manifest: &FeatureManifest, images: Vec<FeatureImage>, split: Split) -> LabeledFeatureSet<Item> {
    let items = images
        .into_iter()
        .zip(&manifest.labels)
        .map(|(img, l)| LabeledItem { feature: (img, l.capture_seed), claimed: l.claimed.clone(), truth: l.truth.clone() })
        .collect();
    LabeledFeatureSet::new(items, split)
}

fn attack_cmd(seed: Option<u64>, scenario: &Path, features: &Path, rogue_features: &Path, out: &Path) -> Result<()> {
    let mut sc = AttackScenario::load(scenario)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let (manifest, images) = read_features(features)?;
    let (rogue_manifest, rogue_images) = read_features(rogue_features)?;
    let ids = |m: &FeatureManifest| -> Vec<String> {
        m.labels.iter().map(|l| l.truth.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    };
    sc.validate(&ids(&manifest), &ids(&rogue_manifest))?;
    let legit = labeled(&manifest, images, Split::Train);
    let rogue = labeled(&rogue_manifest, rogue_images, Split::Train);
    let result = match sc.kind {
        AttackKind::Contamination => contaminate_enrollment(&legit, &rogue, &sc)?,
        AttackKind::Impersonation => impersonation_testset(&legit, &rogue, &sc)?,
    };
    let labels = result
        .items
        .iter()
        .map(|i| ItemLabel { claimed: i.claimed.clone(), truth: i.truth.clone(), capture_seed: i.feature.1 })
        .collect();
    let images: Vec<FeatureImage> = result.items.iter().map(|i| i.feature.0.clone()).collect();
    let out_manifest = FeatureManifest {
        labels,
        split: match sc.kind {
            AttackKind::Contamination => "train".into(),
            AttackKind::Impersonation => "test".into(),
        },
        ..manifest
    };
    store::write_images(out, out_manifest, &images)?;
    let foreign = result.items.iter().filter(|i| !i.is_genuine()).count();
    println!("{} items ({} claiming {} falsely) written to {}", images.len(), foreign, sc.target, out.display());
    Ok(())
}

fn detect_cmd(detector: &Path, transfer: &Path, scratch: &Path, features: &Path) -> Result<()> {
    let det = OneClassDetector::load(detector)?;
    let transfer = TrainedModel::load(transfer)?;
    let scratch = TrainedModel::load(scratch)?;
    let (manifest, images) = read_features(features)?;
    let refs: Vec<&FeatureImage> = images.iter().collect();
    let pt = transfer.forward(&refs)?;
    let pd = scratch.forward(&refs)?;
    let d = posterior_difference(&pt, &pd)?;
    let truth: Vec<&str> = manifest.labels.iter().map(|l| l.truth.as_str()).collect();
    let margins = true_positive_margin(&d, &truth)?;
    let verdict = det.detect(&d)?;
    println!("flag {} score {:.6}", verdict.flag.name(), verdict.score);
    for (class, m) in d.col_classes.iter().zip(margins) {
        match m {
            Some(v) => println!("margin {class} {v:+.6}"),
            None => println!("margin {class} absent"),
        }
    }
    Ok(())
}

fn experiment_cmd(cfg: &ExperimentConfig, out: Option<&Path>, artifacts: bool) -> Result<()> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    let mut timing = Timing::default();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timing: &mut Timing| {
        timing.phases.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    let mut lab = Lab::new(cfg)?;
    lap("corpus", &mut timing);
    let classification = lab.run_classification()?;
    lap("classification", &mut timing);
    let impersonation = if cfg.population.rogue > 0 { Some(lab.run_impersonation()?) } else { None };
    lap("impersonation", &mut timing);
    let contamination = lab.run_contamination()?;
    lap("contamination", &mut timing);
    let report = Report::new(cfg, lab.corpus.summary.clone(), Some(classification), impersonation, Some(contamination));
    report.write(&dir)?;
    if artifacts {
        lab.write_artifacts(&dir)?;
    }
    timing.write(&dir)?;
    print!("{}", report.to_text());
    println!("\nreport written to {}", dir.display());
    Ok(())
}

fn report_cmd(input: &Path, format: Format) -> Result<()> {
    let report = Report::load(input)?;
    match format {
        Format::Text => print!("{}", report.to_text()),
        Format::Csv => print!("{}", report.to_csv()),
        Format::Json => println!("{}", report.to_json()),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { out, env, per_device, split, rogues } => {
            simulate_cmd(&load_config(cli)?, out, *env, *per_device, *split, *rogues)
        }
        Command::Extract { dataset, out, kind, clip, rho_ref } => {
            extract_cmd(&load_config(cli)?, dataset, out, feature_kind(*kind), *clip, *rho_ref)
        }
        Command::Train { features, out, mode, base, log } => {
            train_cmd(&load_config(cli)?, features, out, *mode, base.as_deref(), log.as_deref())
        }
        Command::Attack { scenario, features, rogue_features, out } => {
            attack_cmd(cli.seed, scenario, features, rogue_features, out)
        }
        Command::Detect { detector, transfer, scratch, features } => detect_cmd(detector, transfer, scratch, features),
        Command::Experiment { out, no_artifacts } => experiment_cmd(&load_config(cli)?, out.as_deref(), !no_artifacts),
        Command::Report { input, format } => report_cmd(input, *format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
