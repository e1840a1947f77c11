use num_complex::Complex64;

use super::*;
use crate::grid::Grid;
use crate::signal::{
    sample_device_population, synthesize_capture, ChannelRealization, LoRaConfig, Tap,
    TimeVariation,
};

fn spec_from(values: Vec<Complex64>, rows: usize, cols: usize) -> Spectrogram {
    Spectrogram {
        bins: Grid::from_vec(rows, cols, values),
        config: StftConfig::default(),
        power_tag: None,
    }
}

fn random_spec(rows: usize, cols: usize, s: u64) -> Spectrogram {
    use rand::Rng;
    let mut rng = crate::seed::rng(s);
    let v = (0..rows * cols)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    spec_from(v, rows, cols)
}

fn scaled(s: &Spectrogram, c: f64) -> Spectrogram {
    Spectrogram {
        bins: s.bins.map(|z| z * c),
        ..s.clone()
    }
}

fn static_channel(gains: &[(usize, Complex64)]) -> ChannelRealization {
    ChannelRealization {
        taps: gains
            .iter()
            .map(|&(delay, gain)| Tap { delay, gain })
            .collect(),
        ..ChannelRealization::identity()
    }
}

#[test]
fn scaled_pair_is_perfectly_correlated() {
    let s_h = random_spec(16, 20, 1);
    let s_l = scaled(&s_h, 0.3);
    let out = correlation_filter(&s_h, &s_l, 1.0, 0.0).unwrap();
    assert!((out.rho - 1.0).abs() < 1e-12);
    assert!(out.accepted);
}

#[test]
fn flat_peak_profile_is_undefined() {
    let s = spec_from(vec![Complex64::new(1.0, 0.0); 8 * 5], 8, 5);
    assert!(matches!(
        correlation_filter(&s, &s, 1.0, 0.05),
        Err(crate::Error::UndefinedCorrelation(_))
    ));
}

#[test]
fn static_pair_passes_and_gain_step_fails() {
    let cfg = LoRaConfig::default();
    let stft_cfg = StftConfig::default();
    let dev = &sample_device_population(1, 2).unwrap()[0];
    let spectra = |ch: &ChannelRealization| {
        let p = synthesize_capture(dev, ch, &cfg, 9).unwrap();
        (stft(&p.high, &stft_cfg).unwrap(), stft(&p.low, &stft_cfg).unwrap())
    };
    let mut chamber = ChannelRealization::identity();
    chamber.snr_db = Some(40.0);
    let (ch_h, ch_l) = spectra(&chamber);
    let rho_ref = pair_correlation(&ch_h, &ch_l).unwrap();

    let mut stat = static_channel(&[
        (0, Complex64::new(0.7, 0.3)),
        (4, Complex64::new(-0.2, 0.25)),
    ]);
    stat.snr_db = Some(30.0);
    let (h, l) = spectra(&stat);
    assert!(correlation_filter(&h, &l, rho_ref, DEFAULT_THETA).unwrap().accepted);

    let n = cfg.preamble_len();
    let mut stepped = stat.clone();
    stepped.time_variation = TimeVariation::Step {
        at_sample: n + n / 2,
        factor: 5.0,
    };
    let (h, l) = spectra(&stepped);
    let out = correlation_filter(&h, &l, rho_ref, DEFAULT_THETA).unwrap();
    assert!(!out.accepted, "rho_d = {}", out.rho_d);
}

#[test]
fn identical_spectra_give_zero_quotient() {
    let s = random_spec(8, 6, 3);
    let q = quotient(&s, &s, DEFAULT_GUARD).unwrap();
    assert!(q.q_db.as_slice().iter().all(|&v| v.abs() < 1e-12));
}

#[test]
fn tenfold_amplitude_is_20_db() {
    let s = random_spec(8, 6, 4);
    let q = quotient(&scaled(&s, 10.0), &s, DEFAULT_GUARD).unwrap();
    for (v, g) in q.q_db.as_slice().iter().zip(q.guarded.as_slice()) {
        if !g {
            assert!((v - 20.0).abs() < 1e-9);
        }
    }
}

#[test]
fn guard_masks_tiny_denominators_to_zero_db() {
    let mut v = vec![Complex64::new(1.0, 0.0); 4];
    v[2] = Complex64::new(1e-9, 0.0);
    v[3] = Complex64::new(0.0, 0.0);
    let s_l = spec_from(v, 2, 2);
    let s_h = scaled(&s_l, 3.0);
    let q = quotient(&s_h, &s_l, DEFAULT_GUARD).unwrap();
    assert_eq!(q.guarded.as_slice(), &[false, false, true, true]);
    assert_eq!(q.q_db[(1, 0)], 0.0);
    assert_eq!(q.q_db[(1, 1)], 0.0);
    assert!(q.q_db.as_slice().iter().all(|v| v.is_finite()));
}

#[test]
fn quotient_cancels_static_channels() {
    let cfg = LoRaConfig::default();
    let stft_cfg = StftConfig::default();
    let dev = &sample_device_population(3, 8).unwrap()[1];
    let q_for = |ch: &ChannelRealization| {
        let p = synthesize_capture(dev, ch, &cfg, 1).unwrap();
        let h = stft(&p.high, &stft_cfg).unwrap();
        let l = stft(&p.low, &stft_cfg).unwrap();
        quotient(&h, &l, DEFAULT_GUARD).unwrap()
    };
    let a = q_for(&static_channel(&[(0, Complex64::new(0.9, -0.1)), (3, Complex64::new(0.3, 0.3))]));
    let b = q_for(&static_channel(&[(0, Complex64::new(-0.4, 0.6)), (2, Complex64::new(0.2, -0.5)), (7, Complex64::new(0.1, 0.1))]));
    let mut worst: f64 = 0.0;
    for i in 0..a.q_db.as_slice().len() {
        if !a.guarded.as_slice()[i] && !b.guarded.as_slice()[i] {
            worst = worst.max((a.q_db.as_slice()[i] - b.q_db.as_slice()[i]).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn saturating_value_fills_top_level() {
    let m = Grid::filled(5, 7, 3.0);
    let img = rasterize(&m, ClipRange { lo: -1.0, hi: 3.0 }, 8, 8, FeatureKind::Quotient).unwrap();
    assert!(img.pixels.iter().all(|&p| p == 255));
    let img = rasterize(&Grid::filled(5, 7, 9.0), ClipRange { lo: -1.0, hi: 3.0 }, 8, 8, FeatureKind::Quotient).unwrap();
    assert!(img.pixels.iter().all(|&p| p == 255));
}

#[test]
fn bilinear_ramp_interpolates_columns() {
    let m = Grid::from_vec(2, 2, vec![0.0, 1.0, 0.0, 1.0]);
    let img = rasterize(&m, ClipRange { lo: 0.0, hi: 1.0 }, 4, 8, FeatureKind::Quotient).unwrap();
    for r in 0..4 {
        let row = &img.pixels[r * 4..r * 4 + 4];
        assert_eq!(row, &[0, 85, 170, 255]);
    }
}

#[test]
fn native_size_raster_preserves_rank_order() {
    use rand::Rng;
    let mut rng = crate::seed::rng(16);
    let m = Grid::from_vec(16, 16, (0..256).map(|_| rng.random_range(-5.0..5.0)).collect());
    let clip = ClipRange { lo: -5.0, hi: 5.0 };
    let img = rasterize(&m, clip, 16, 8, FeatureKind::Quotient).unwrap();
    let step = (clip.hi - clip.lo) / 255.0;
    let v = m.as_slice();
    for i in 0..256 {
        for j in 0..256 {
            if v[i] - v[j] > step {
                assert!(img.pixels[i] > img.pixels[j]);
            }
        }
    }
}

#[test]
fn degenerate_clip_is_rejected() {
    let m = Grid::filled(2, 2, 1.0);
    assert!(rasterize(&m, ClipRange { lo: 1.0, hi: 1.0 }, 4, 8, FeatureKind::Quotient).is_err());
    assert!(ClipRange::from_corpus([&m], 1.0, 99.0).unwrap().validate().is_err());
}

#[test]
fn corpus_percentiles_interpolate() {
    let m = Grid::from_vec(1, 101, (0..=100).map(f64::from).collect());
    let c = ClipRange::from_corpus([&m], 1.0, 99.0).unwrap();
    assert!((c.lo - 1.0).abs() < 1e-12 && (c.hi - 99.0).abs() < 1e-12);
}

#[test]
fn zero_spectrogram_feature_is_uniform() {
    let s = spec_from(vec![Complex64::new(0.0, 0.0); 64], 8, 8);
    let img = spectrogram_feature(&s, ClipRange { lo: -250.0, hi: 0.0 }, 16, 8).unwrap();
    assert!(img.pixels.iter().all(|&p| p == img.pixels[0]));
}

#[test]
fn spectrogram_feature_sees_the_channel_and_is_deterministic() {
    use crate::signal::{sample_channel, ChannelPresets, Environment};
    let lora = LoRaConfig::default();
    let fcfg = FeatureConfig::default();
    let rows = fcfg.rows_for(&lora);
    let dev = &sample_device_population(1, 4).unwrap()[0];
    let presets = ChannelPresets::default();
    let analyze = |env| {
        let ch = sample_channel(env, &presets, 5).unwrap();
        let p = synthesize_capture(dev, &ch, &lora, 5).unwrap();
        analyze_capture(&p, &fcfg, &rows).unwrap()
    };
    let chamber = analyze(Environment::Chamber);
    let outdoor = analyze(Environment::Outdoor);
    let clip = ClipRange::from_corpus([&chamber.spectrogram_db, &outdoor.spectrogram_db], 1.0, 99.0).unwrap();
    let a = to_image(&chamber, FeatureKind::Spectrogram, clip, &fcfg).unwrap();
    let b = to_image(&outdoor, FeatureKind::Spectrogram, clip, &fcfg).unwrap();
    let diff: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .sum::<f64>()
        / a.pixels.len() as f64;
    assert!(diff > 0.0);
    let again = to_image(&analyze(Environment::Chamber), FeatureKind::Spectrogram, clip, &fcfg).unwrap();
    assert_eq!(a, again);
}
