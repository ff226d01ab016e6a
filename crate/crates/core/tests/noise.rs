mod common;

use corf::noise::{corrupt, corrupt_detailed, feature_stability, noise_sweep, parse_range_list, sweep_csv, NoiseSpec};
use corf::synth::fixture_suite;
use corf::{apply_bank, build_bank, BankConfig, FeatureTensor, Image};
use proptest::prelude::*;

#[test]
fn zero_percent_is_identity() {
    let img = common::random_image(16, 1);
    assert_eq!(corrupt(&img, &NoiseSpec::new(0.3, 0.0, 5).unwrap()), img);
}

#[test]
fn deterministic_per_seed() {
    let img = common::random_image(16, 1);
    let spec = NoiseSpec::new(0.2, 0.5, 5).unwrap();
    assert_eq!(corrupt(&img, &spec), corrupt(&img, &spec));
    assert_ne!(corrupt(&img, &spec), corrupt(&img, &NoiseSpec::new(0.2, 0.5, 6).unwrap()));
}

#[test]
fn full_corruption_has_the_requested_std() {
    let img = Image::constant(256, 256, 0.5).unwrap();
    let c = corrupt_detailed(&img, &NoiseSpec::new(0.2, 1.0, 2024).unwrap());
    assert_eq!(c.deltas.len(), 65_536);
    let n = c.deltas.len() as f64;
    let mean = c.deltas.iter().sum::<f64>() / n;
    let sd = (c.deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd / 0.2 - 1.0).abs() <= 0.05, "std {sd}");
    assert!(mean.abs() < 0.01);
}

#[test]
fn selected_pixels_change_and_others_do_not() {
    let img = Image::constant(40, 25, 0.5).unwrap();
    let spec = NoiseSpec::new(0.1, 0.37, 9).unwrap();
    let c = corrupt_detailed(&img, &spec);
    assert_eq!(c.indices.len(), (0.37f64 * 1000.0).floor() as usize);
    let mut sorted = c.indices.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), c.indices.len());
    let changed = c.indices.iter().filter(|&&i| c.image.data()[i] != 0.5).count();
    assert!(changed as f64 >= 0.99 * c.indices.len() as f64);
    let untouched = (0..1000).filter(|i| !c.indices.contains(i)).all(|i| c.image.data()[i] == 0.5);
    assert!(untouched);
    assert_eq!(NoiseSpec::new(0.1, 0.3, 0).unwrap().corrupted_count(10), 3);
}

#[test]
fn invalid_specs() {
    assert!(NoiseSpec::new(-0.1, 0.5, 0).is_err());
    assert!(NoiseSpec::new(0.1, 1.5, 0).is_err());
    assert!(NoiseSpec::new(f64::NAN, 0.5, 0).is_err());
}

#[test]
fn stability_conventions() {
    let t = FeatureTensor::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let z = FeatureTensor::new(2, 2, 1, vec![0.0; 4]).unwrap();
    assert!((feature_stability(&t, &t).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(feature_stability(&t, &z).unwrap(), 0.0);
    assert_eq!(feature_stability(&z, &z).unwrap(), 1.0);
    let other = FeatureTensor::new(1, 4, 1, vec![0.0; 4]).unwrap();
    assert!(feature_stability(&t, &other).is_err());
    let orth = FeatureTensor::new(2, 2, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let orth2 = FeatureTensor::new(2, 2, 1, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    assert_eq!(feature_stability(&orth, &orth2).unwrap(), 0.0);
}

#[test]
fn light_corruption_is_more_stable_than_full() {
    let bank = build_bank(BankConfig::default()).unwrap();
    let (_, img) = &fixture_suite()[0];
    let clean = apply_bank(img, &bank).unwrap();
    let score = |p| {
        let noisy = apply_bank(&corrupt(img, &NoiseSpec::new(0.1, p, 42).unwrap()), &bank).unwrap();
        feature_stability(&clean, &noisy).unwrap()
    };
    let (light, full) = (score(0.1), score(1.0));
    eprintln!("stability 10%: {light:.4}, 100%: {full:.4}");
    assert!(light > full);
}

#[test]
fn sweep_is_schedule_independent() {
    let bank = build_bank(BankConfig {
        sigmas: vec![1.0, 2.0],
        ..BankConfig::default()
    })
    .unwrap();
    let images: Vec<(String, Image)> = fixture_suite().into_iter().take(2).collect();
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| noise_sweep(&images, &bank, &[0.1, 0.3], &[10.0, 50.0], 7).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a, b);
    assert_eq!(a.len(), 8);
    let csv = sweep_csv(&a);
    assert!(csv.starts_with("image,sigma_noise,percent,stability,clean_peak,noisy_peak\n"));
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn range_lists() {
    assert_eq!(parse_range_list("10..100:10").unwrap().len(), 10);
    assert_eq!(parse_range_list("0.1,0.2,0.3").unwrap(), vec![0.1, 0.2, 0.3]);
    assert_eq!(parse_range_list("1..2:0.25").unwrap(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
    assert!(parse_range_list("a,b").is_err());
    assert!(parse_range_list("5..1:1").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corrupted_images_stay_in_range(seed in any::<u64>(), sigma in 0.0..1.0f64, p in 0.0..=1.0f64) {
        let img = common::random_image(12, seed ^ 1);
        let spec = NoiseSpec::new(sigma, p, seed).unwrap();
        let c = corrupt_detailed(&img, &spec);
        prop_assert!(c.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(c.indices.len(), spec.corrupted_count(144));
    }
}
