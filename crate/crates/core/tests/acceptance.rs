//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Criteria 5 to 9 and 11 run the desk experiment
//! for seeds 1, 2 and 3 plus a second seed-1 run, so this target takes a
//! while.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;

use rffi_core::classifier::{gradient_check, ArchSpec, BlockSpec, Head, Network, PosteriorMatrix};
use rffi_core::feature::{frame_count_for, quotient, stft, StftConfig};
use rffi_core::grid::Grid;
use rffi_core::harness::{auc, micro_average_roc, roc, ExperimentConfig, Lab, Mode, Report, Timing};
use rffi_core::feature::FeatureKind;
use rffi_core::seed;
use rffi_core::signal::{sample_device_population, synthesize_capture, ChannelRealization, LoRaConfig, Tap};

// Tolerances and thresholds.
const CANCEL_TOL: f64 = 1e-6;
const SPEC_DIFF_DB: f64 = 0.1;
const FRAMES: usize = 319;
const PARAMS: usize = 2_310_020;
const LAYER_PARAMS: [usize; 7] = [80, 16, 1168, 32, 4640, 64, 2_304_020];
const GRAD_TOL: f64 = 1e-4;
const GRAD_MAX_PARAMS: usize = 5000;
const ACCURACY_GAP: f64 = 0.10;
const MIN_STEPS: usize = 2;
const SEEDS: [u64; 3] = [1, 2, 3];
const VULNERABLE_AUC: f64 = 0.9;
const MIN_VULNERABLE_DRAWS: usize = 8;
const SIGN_FRACTION: f64 = 0.8;
const DETECTION_AT_200: f64 = 0.75;
const ORACLE_INSTANCES: usize = 100;
const ORACLE_MAX_N: usize = 50;

struct Gate {
    failed: usize,
}

impl Gate {
    fn check(&mut self, id: u32, name: &str, pass: bool, elapsed: Duration, budget: Duration, detail: String) {
        let in_time = elapsed <= budget;
        let ok = pass && in_time;
        if !ok {
            self.failed += 1;
        }
        println!(
            "{} criterion {id:>2} {name}: {detail}; {:.1}s of {:.0}s budget",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs_f64()
        );
    }
}

fn mins(m: u64) -> Duration {
    Duration::from_secs(m * 60)
}

fn static_channel(taps: &[(usize, (f64, f64))]) -> ChannelRealization {
    ChannelRealization {
        taps: taps.iter().map(|&(delay, (re, im))| Tap { delay, gain: Complex64::new(re, im) }).collect(),
        ..ChannelRealization::identity()
    }
}

fn channel_cancellation(gate: &mut Gate) {
    let t = Instant::now();
    let lora = LoRaConfig::default();
    let stft_cfg = StftConfig::default();
    let dev = &sample_device_population(3, 8).unwrap()[1];
    let a = static_channel(&[(0, (0.9, -0.1)), (3, (0.3, 0.3))]);
    let b = static_channel(&[(0, (-0.4, 0.6)), (2, (0.2, -0.5)), (7, (0.1, 0.1))]);
    let run = |ch: &ChannelRealization| {
        let p = synthesize_capture(dev, ch, &lora, 1).unwrap();
        let h = stft(&p.high, &stft_cfg).unwrap();
        let l = stft(&p.low, &stft_cfg).unwrap();
        (quotient(&h, &l, rffi_core::feature::DEFAULT_GUARD).unwrap(), h.power_db())
    };
    let (qa, sa) = run(&a);
    let (qb, sb) = run(&b);
    let mut worst: f64 = 0.0;
    let mut unguarded = 0;
    for i in 0..qa.q_db.as_slice().len() {
        if !qa.guarded.as_slice()[i] && !qb.guarded.as_slice()[i] {
            worst = worst.max((qa.q_db.as_slice()[i] - qb.q_db.as_slice()[i]).abs());
            unguarded += 1;
        }
    }
    let (x, y) = (sa.as_slice(), sb.as_slice());
    let spec_diff = x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64;
    gate.check(
        1,
        "channel cancellation",
        unguarded > 0 && worst < CANCEL_TOL && spec_diff > SPEC_DIFF_DB,
        t.elapsed(),
        Duration::from_secs(10),
        format!("quotient max dev {worst:.2e} over {unguarded} bins, spectrogram mean diff {spec_diff:.2} dB"),
    );
}

fn frame_count(gate: &mut Gate) {
    let t = Instant::now();
    let lora = LoRaConfig {
        preamble_symbols: 10,
        spreading_factor: 10,
        bandwidth_hz: 62_500.0,
        sample_rate_hz: 1_000_000.0,
        ..LoRaConfig::default()
    };
    let stft_cfg = StftConfig { window_len: 1024, hop: 512, ..StftConfig::default() };
    let m = frame_count_for(&lora, &stft_cfg).unwrap();
    gate.check(2, "frame count", m == FRAMES, t.elapsed(), Duration::from_secs(1), format!("M = {m}"));
}

fn architecture(gate: &mut Gate) {
    let t = Instant::now();
    let arch = ArchSpec::standard(256, 20);
    let c = arch.param_counts().unwrap();
    let grouped: Vec<usize> = c.chunks(2).map(|p| p.iter().sum()).collect();
    let net = Network::<f32>::build(&arch, 1).unwrap();
    let total = net.param_count();
    gate.check(
        3,
        "architecture",
        total == PARAMS && grouped == LAYER_PARAMS,
        t.elapsed(),
        Duration::from_secs(5),
        format!("{total} parameters, per layer {grouped:?}"),
    );
}

fn gradients(gate: &mut Gate) {
    let t = Instant::now();
    let arch = ArchSpec {
        input_size: 12,
        blocks: vec![BlockSpec { filters: 4, pool: true }, BlockSpec { filters: 6, pool: false }],
        head: Head::Flatten,
        num_classes: 3,
    };
    let mut net = Network::<f64>::build(&arch, 5).unwrap();
    // Non-trivial batch-norm affine parameters.
    net.norms[0].gamma = vec![1.2, 0.8, 1.1, 0.9];
    net.norms[1].beta = vec![0.1, -0.1, 0.2, 0.0, -0.2, 0.05];
    let mut rng = seed::rng(17);
    let x: Vec<f64> = (0..3 * 12 * 12).map(|_| rng.random::<f64>()).collect();
    let rep = gradient_check(&net, &x, &[0, 2, 1]).unwrap();
    let n = net.param_count();
    gate.check(
        4,
        "gradient check",
        n <= GRAD_MAX_PARAMS && rep.checked == n && rep.max_relative_error < GRAD_TOL,
        t.elapsed(),
        Duration::from_secs(60),
        format!("max relative error {:.2e} over {n} parameters", rep.max_relative_error),
    );
}

/// (2 * wins + ties) / (2 * P * N) by direct enumeration.
fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice, mut p, mut n) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            n += 1;
            continue;
        }
        p += 1;
        for (j, &lj) in labels.iter().enumerate() {
            if !lj {
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * p * n) as f64
}

fn metric_oracles(gate: &mut Gate) {
    let t = Instant::now();
    let mut rng = seed::rng(2024);
    let mut mismatches = 0;
    for _ in 0..ORACLE_INSTANCES {
        let n = rng.random_range(2..=ORACLE_MAX_N);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        // Coarse scores so ties occur.
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..12) as f64 / 11.0).collect();
        if auc(&roc(&scores, &labels).unwrap()) != mann_whitney(&scores, &labels) {
            mismatches += 1;
        }
    }

    let classes: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let probs = vec![0.7, 0.2, 0.1, 0.3, 0.4, 0.3, 0.2, 0.2, 0.6, 0.5, 0.1, 0.4];
    let truth = ["A", "B", "C", "C"];
    let pm = PosteriorMatrix::new(
        Grid::from_vec(4, 3, probs.clone()),
        (0..4).map(|i| format!("o{i}")).collect(),
        classes.clone(),
    )
    .unwrap();
    let mut flat_scores = Vec::new();
    let mut flat_labels = Vec::new();
    for (o, t) in truth.iter().enumerate() {
        for (c, class) in classes.iter().enumerate() {
            flat_scores.push(probs[o * 3 + c]);
            flat_labels.push(class == t);
        }
    }
    let micro = roc_points(&micro_average_roc(&pm, &truth).unwrap());
    let hand = roc_points(&roc(&flat_scores, &flat_labels).unwrap());
    let micro_auc = auc(&micro_average_roc(&pm, &truth).unwrap());
    let micro_ok = micro == hand && micro_auc == mann_whitney(&flat_scores, &flat_labels);
    gate.check(
        10,
        "metric oracles",
        mismatches == 0 && micro_ok,
        t.elapsed(),
        Duration::from_secs(10),
        format!("{mismatches} of {ORACLE_INSTANCES} AUC mismatches, micro-average match {micro_ok}"),
    );
}

fn roc_points(c: &rffi_core::harness::RocCurve) -> Vec<(f64, f64)> {
    c.points.clone()
}

fn desk_config(seed: u64) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.seed = seed;
    cfg
}

/// Full desk experiment with per-phase wall clock.
fn desk_run(seed: u64) -> (Report, Timing) {
    let cfg = desk_config(seed);
    let mut timing = Timing::default();
    let mut clock = Instant::now();
    let mut lap = |name: &str| {
        timing.phases.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    let mut lab = Lab::new(&cfg).unwrap();
    lap("corpus");
    let c = lab.run_classification().unwrap();
    lap("classification");
    let i = lab.run_impersonation().unwrap();
    lap("impersonation");
    let k = lab.run_contamination().unwrap();
    lap("contamination");
    let report = Report::new(&cfg, lab.corpus.summary.clone(), Some(c), Some(i), Some(k));
    (report, timing)
}

fn phase(timings: &[Timing], names: &[&str]) -> Duration {
    let s: f64 = timings.iter().flat_map(|t| names.iter().map(|n| t.phases[*n])).sum();
    Duration::from_secs_f64(s)
}

fn non_decreasing_steps(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] >= w[0]).count()
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn desk_criteria(gate: &mut Gate, runs: &[(Report, Timing)]) {
    let reports: Vec<&Report> = runs.iter().map(|(r, _)| r).collect();
    let timings: Vec<Timing> = runs.iter().map(|(_, t)| t.clone()).collect();
    let cfg = &reports[0].config;

    // 5: accuracy gap and trend, seed-averaged.
    let sweep = &cfg.classification.train_samples;
    let avg = |f: FeatureKind, m: Mode, n: usize| {
        mean(reports.iter().map(|r| r.classification.as_ref().unwrap().accuracy(f, m, n).unwrap()))
    };
    let n0 = cfg.classification.impersonation_samples;
    let qt = avg(FeatureKind::Quotient, Mode::Transfer, n0);
    let ss = avg(FeatureKind::Spectrogram, Mode::Scratch, n0);
    let curve: Vec<f64> = sweep.iter().map(|&n| avg(FeatureKind::Quotient, Mode::Transfer, n)).collect();
    let steps = non_decreasing_steps(&curve);
    gate.check(
        5,
        "robustness trend",
        qt - ss >= ACCURACY_GAP && steps >= MIN_STEPS,
        phase(&timings, &["corpus", "classification"]),
        mins(30),
        format!(
            "quotient+transfer {qt:.3} vs spectrogram+scratch {ss:.3} at n={n0}; curve over {sweep:?} = {curve:.3?}, {steps} of {} steps non-decreasing",
            curve.len() - 1
        ),
    );

    // 6: impersonation micro-AUC ordering on every seed.
    let pairs: Vec<(f64, f64)> = reports
        .iter()
        .map(|r| {
            let im = r.impersonation.as_ref().unwrap();
            (
                im.row(FeatureKind::Quotient, Mode::Transfer).unwrap().micro_auc,
                im.row(FeatureKind::Spectrogram, Mode::Scratch).unwrap().micro_auc,
            )
        })
        .collect();
    gate.check(
        6,
        "impersonation trend",
        pairs.iter().all(|(a, b)| a > b),
        phase(&timings, &["impersonation"]),
        mins(20),
        format!("(quotient+transfer, spectrogram+scratch) micro AUC per seed {pairs:.4?}"),
    );

    // 7 and 8 use seed 1's ten contaminated draws.
    let k = reports[0].contamination.as_ref().unwrap();
    let seed1 = &timings[..1];
    let aucs: Vec<f64> = k.draws.iter().map(|d| d.transfer_auc).collect();
    let vulnerable = aucs.iter().filter(|&&a| a < VULNERABLE_AUC).count();
    gate.check(
        7,
        "contamination vulnerability",
        aucs.len() == 10 && vulnerable >= MIN_VULNERABLE_DRAWS,
        phase(seed1, &["contamination"]),
        mins(20),
        format!("{vulnerable} of {} draws below {VULNERABLE_AUC}: {aucs:.3?}", aucs.len()),
    );

    // No-attack margin per class pools every normal pair of a seed; the
    // positive fraction is then averaged over seeds.
    let positive_per_seed: Vec<f64> = reports
        .iter()
        .map(|r| {
            let k = r.contamination.as_ref().unwrap();
            let classes = k.normal_margins.first().map_or(0, |m| m.margins.len());
            let per_class: Vec<f64> = (0..classes)
                .map(|c| mean(k.normal_margins.iter().filter_map(|m| m.margins[c])))
                .collect();
            per_class.iter().filter(|&&v| v > 0.0).count() as f64 / classes.max(1) as f64
        })
        .collect();
    let positive = mean(positive_per_seed.iter().copied());
    let attacked: Vec<f64> = k.draws.iter().map(|d| d.target_margin).collect();
    let negative = attacked.iter().filter(|&&v| v < 0.0).count() as f64 / attacked.len().max(1) as f64;
    gate.check(
        8,
        "sign properties",
        attacked.len() == 10 && positive >= SIGN_FRACTION && negative >= SIGN_FRACTION,
        phase(seed1, &["contamination"]),
        mins(20),
        format!(
            "classes with positive no-attack margin {positive:.3} (per seed {positive_per_seed:.3?}), attacked target margin negative in {negative:.3} of {} draws",
            attacked.len()
        ),
    );

    // 9: detection, seed-averaged.
    let det_sweep = &cfg.contamination.train_samples;
    let rate = |n: usize| {
        mean(reports.iter().map(|r| {
            r.contamination.as_ref().unwrap().detection_at(n).and_then(|d| d.detection_rate).unwrap_or(0.0)
        }))
    };
    let rates: Vec<f64> = det_sweep.iter().map(|&n| rate(n)).collect();
    let steps = non_decreasing_steps(&rates);
    let last = *det_sweep.last().unwrap();
    let at_last = rate(last);
    let nu = cfg.contamination.detector.nu;
    let false_alarms: Vec<f64> = reports
        .iter()
        .flat_map(|r| r.contamination.as_ref().unwrap().detection.iter().map(|d| d.false_alarm_rate.unwrap_or(1.0)))
        .collect();
    let worst_fa = false_alarms.iter().copied().fold(0.0, f64::max);
    gate.check(
        9,
        "detection trend",
        steps >= MIN_STEPS && last == 200 && at_last >= DETECTION_AT_200 && worst_fa <= 2.0 * nu,
        phase(&timings, &["contamination"]),
        mins(45),
        format!(
            "rates over {det_sweep:?} = {rates:.3?} ({steps} of {} steps non-decreasing), worst false-alarm rate {worst_fa:.3} vs {:.2}",
            rates.len() - 1,
            2.0 * nu
        ),
    );
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--list`; this target has
    // no individual tests to list.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut gate = Gate { failed: 0 };
    channel_cancellation(&mut gate);
    frame_count(&mut gate);
    architecture(&mut gate);
    gradients(&mut gate);
    metric_oracles(&mut gate);

    let runs: Vec<(Report, Timing)> = SEEDS.iter().map(|&s| desk_run(s)).collect();
    for ((r, t), s) in runs.iter().zip(SEEDS) {
        eprintln!("desk seed {s} phases {:?}", t.phases);
        eprint!("{}", r.to_text());
    }
    desk_criteria(&mut gate, &runs);

    let first = &runs[0];
    let (again, t2) = desk_run(SEEDS[0]);
    let identical = again.to_json() == first.0.to_json();
    let total: f64 = first.1.phases.values().chain(t2.phases.values()).sum();
    gate.check(
        11,
        "determinism",
        identical,
        Duration::from_secs_f64(total),
        mins(2 * 30),
        format!("rerun of seed {} byte-identical: {identical}", SEEDS[0]),
    );

    if gate.failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", gate.failed);
        ExitCode::FAILURE
    }
}
