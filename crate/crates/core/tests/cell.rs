mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use corf::cell::{
    edge_stimulus, even_orientations, orientation_superposition, subunit_response, weighted_geometric_mean,
    CellEvaluator, ShiftMode,
};
use corf::synth::{bars, ramp_edge};
use corf::{cell_response, configure, rotate_set, CellParams, CorfCell, CorfError, Image, Polarity, ResponseMap, SubUnit};
use proptest::prelude::*;

fn fig2() -> CorfCell {
    configure(2.0, &CellParams::default()).unwrap()
}

fn peak(img: &Image, c: &CorfCell) -> f64 {
    cell_response(img, c).unwrap().max()
}

#[test]
fn fig2_geometry() {
    let c = fig2();
    assert_eq!(c.subunits.len(), 8);
    assert_eq!(c.count(Polarity::On), 4);
    assert_eq!(c.count(Polarity::Off), 4);
    for s in &c.subunits {
        let (x, _) = s.offset();
        match s.delta {
            Polarity::On => assert!(x > 0.0, "{s:?}"),
            Polarity::Off => assert!(x < 0.0, "{s:?}"),
        }
        assert!(s.rho == 2.0 || s.rho == 4.0);
        assert_eq!(s.sigma, 2.0);
    }
    // inner circle weighs more than the outer one
    let w_inner = c.weights[c.subunits.iter().position(|s| s.rho == 2.0).unwrap()];
    let w_outer = c.weights[c.subunits.iter().position(|s| s.rho == 4.0).unwrap()];
    assert!(w_inner > w_outer);
}

#[test]
fn configure_scales_with_sigma() {
    for sigma in [1.0, 3.0, 5.0] {
        let c = configure(sigma, &CellParams::default()).unwrap();
        assert!(c.subunits.len() >= 4);
        assert!(c.subunits.iter().all(|s| s.rho == sigma || s.rho == 2.0 * sigma));
        c.validate().unwrap();
    }
    assert!(matches!(
        configure(0.0, &CellParams::default()),
        Err(CorfError::InvalidParameter(_))
    ));
    let p = CellParams { threshold: 1.5, ..CellParams::default() };
    assert!(configure(2.0, &p).is_err());
}

#[test]
fn pipeline_matches_literal_sums() {
    let c = fig2();
    for seed in [1, 2] {
        let img = common::random_image(16, seed);
        let fast = cell_response(&img, &c).unwrap();
        assert!(common::max_abs_diff(fast.data(), &common::cell(&img, &c)) <= 1e-9);
    }
    // non-square image and an off-grid rotation
    let img = Image::from_fn(18, 13, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
    let r = rotate_set(&c, 0.7);
    let fast = cell_response(&img, &r).unwrap();
    assert!(common::max_abs_diff(fast.data(), &common::cell(&img, &r)) <= 1e-9);
}

#[test]
fn subunit_response_examples() {
    let mut rng = corf::rng::SeededRng::new(11);
    let data: Vec<f64> = (0..256).map(|_| rng.uniform()).collect();
    let map = ResponseMap::new(16, 16, data.clone()).unwrap();
    let zeros = ResponseMap::zeros(16, 16);

    let s = SubUnit {
        delta: Polarity::On,
        sigma: 2.0,
        rho: 3.0,
        phi: FRAC_PI_2,
        sigma_prime: 0.8,
    };
    let out = subunit_response(&map, &zeros, &s, ShiftMode::Bilinear).unwrap();
    let mut expect = vec![0.0; 256];
    for y in 0..16 {
        for x in 0..16 {
            expect[y * 16 + x] = common::subunit_at(&data, 16, 16, x, y, 3.0, FRAC_PI_2, 0.8);
        }
    }
    assert!(common::max_abs_diff(out.data(), &expect) <= 1e-9);
    let nearest = subunit_response(&map, &zeros, &s, ShiftMode::Nearest).unwrap();
    assert!(common::max_abs_diff(nearest.data(), &expect) <= 1e-9);

    // off sub-unit reads the off map
    let off = SubUnit { delta: Polarity::Off, ..s };
    assert!(subunit_response(&map, &zeros, &off, ShiftMode::Bilinear).unwrap().data().iter().all(|v| *v == 0.0));

    // no shift: plain blur
    let centred = SubUnit { rho: 0.0, phi: 0.0, ..s };
    let out = subunit_response(&map, &zeros, &centred, ShiftMode::Bilinear).unwrap();
    let blurred = map.convolve(&corf::Kernel::gaussian(0.8).unwrap()).unwrap();
    assert!(common::max_abs_diff(out.data(), blurred.data()) < 1e-12);

    assert!(subunit_response(&map, &ResponseMap::zeros(15, 16), &s, ShiftMode::Bilinear).is_err());
}

#[test]
fn constant_image_gives_zero() {
    let img = Image::constant(20, 20, 0.6).unwrap();
    assert!(cell_response(&img, &fig2()).unwrap().data().iter().all(|v| *v <= 1e-12));
}

#[test]
fn edge_response_peaks_on_the_edge_line() {
    let img = edge_stimulus(15);
    let r = cell_response(&img, &fig2()).unwrap();
    let (x, _) = r.argmax();
    assert!((x as i64 - 15).abs() <= 1, "peak at column {x}");
    let perpendicular = rotate_set(&fig2(), FRAC_PI_2);
    assert!(peak(&img, &perpendicular) <= 0.05 * r.max());
}

#[test]
fn orientation_tuning() {
    let c = fig2();
    let img = edge_stimulus(20);
    let curve: Vec<f64> = [0.0, 15.0, 30.0, 45.0, 60.0, 90.0]
        .iter()
        .map(|d: &f64| peak(&img, &rotate_set(&c, d.to_radians())))
        .collect();
    assert!(curve[0] > 0.0);
    for w in curve[..4].windows(2) {
        assert!(w[1] <= w[0], "{curve:?}");
    }
    for v in &curve[3..] {
        assert!(*v <= 0.05 * curve[0], "{curve:?}");
    }
}

#[test]
fn rotation_equivariance_within_interpolation_budget() {
    let c = fig2();
    let upright = peak(&ramp_edge(41, 0.0), &c);
    for deg in [30.0, 45.0, 60.0, 120.0] {
        let psi = f64::to_radians(deg);
        let rotated = peak(&ramp_edge(41, psi), &rotate_set(&c, psi));
        let rel = (rotated / upright - 1.0).abs();
        assert!(rel <= 0.10, "{deg} deg: {rotated} vs {upright}");
    }
}

#[test]
fn rotation_algebra() {
    let c = fig2();
    assert_eq!(rotate_set(&c, 0.0), c);
    let (a, b) = (0.4, 1.9);
    let two = rotate_set(&rotate_set(&c, a), b);
    let one = rotate_set(&c, a + b);
    for (s, t) in two.subunits.iter().zip(&one.subunits) {
        assert!((s.phi - t.phi).abs() < 1e-12);
        assert_eq!((s.delta, s.rho, s.sigma, s.sigma_prime), (t.delta, t.rho, t.sigma, t.sigma_prime));
    }
    assert_eq!(two.weights, c.weights);
    let half = rotate_set(&c, PI);
    for (s, t) in c.subunits.iter().zip(&half.subunits) {
        assert!((s.offset().0 + t.offset().0).abs() < 1e-12);
    }
}

#[test]
fn masking_any_subunit_silences_the_peak() {
    let c = fig2();
    let img = edge_stimulus(20);
    let clean = cell_response(&img, &c).unwrap();
    // middle of the edge line, away from reflected borders
    let (px, py) = (clean.argmax().0, 20);
    assert_eq!(clean.get(px, py), clean.max());
    let mean = img.mean();
    for s in &c.subunits {
        let (dx, dy) = s.offset();
        let (cx, cy) = (px as f64 + dx, py as f64 + dy);
        // square DoG support + blur support + one pixel for interpolation
        let radius = (3.0 * s.sigma).ceil() + (3.0 * s.sigma_prime).ceil() + 1.0;
        let masked = Image::from_fn(img.width(), img.height(), |x, y| {
            if (x as f64 - cx).abs().max((y as f64 - cy).abs()) <= radius + 1.0 {
                mean
            } else {
                img.get(x, y)
            }
        })
        .unwrap();
        let mut eval = CellEvaluator::new(&masked, 2.0, 3.0).unwrap();
        eval.prepare(&c).unwrap();
        let idx = c.subunits.iter().position(|t| t == s).unwrap();
        assert_eq!(eval.subunit_maps(&c).unwrap()[idx].get(px, py), 0.0, "{s:?}");
        assert_eq!(eval.response(&c).unwrap().get(px, py), 0.0, "{s:?}");
    }
}

#[test]
fn superposition_of_x_stimulus() {
    let a = bars(33, PI / 4.0, &[0.0], 3.0, 0.0, 1.0);
    let b = bars(33, 3.0 * PI / 4.0, &[0.0], 3.0, 0.0, 1.0);
    let img = Image::new(33, 33, a.data().iter().zip(b.data()).map(|(p, q)| p.max(*q)).collect()).unwrap();
    let c = fig2();
    let maps: Vec<ResponseMap> = even_orientations(12)
        .into_iter()
        .map(|psi| cell_response(&img, &rotate_set(&c, psi)).unwrap())
        .collect();
    let sup = orientation_superposition(&maps).unwrap();
    let best = maps.iter().map(|m| m.max()).fold(0.0, f64::max);
    assert!(maps.iter().all(|m| sup.max() >= m.max()));
    assert_eq!(sup.max(), best);
    for m in &maps {
        assert!(sup.data().iter().zip(m.data()).all(|(s, v)| s >= v));
    }
    assert_eq!(orientation_superposition(&maps[..1]).unwrap(), maps[0]);
    let doubled = maps[0].map(|v| 2.0 * v);
    assert_eq!(orientation_superposition(&[maps[0].clone(), doubled.clone()]).unwrap(), doubled);
    assert!(orientation_superposition(&[]).is_err());
}

#[test]
fn evaluator_caches_and_checks_sigma() {
    let img = common::random_image(16, 4);
    let c = fig2();
    let mut eval = CellEvaluator::new(&img, 2.0, 3.0).unwrap();
    eval.prepare(&c).unwrap();
    for psi in even_orientations(6) {
        let r = rotate_set(&c, psi);
        assert_eq!(eval.response(&r).unwrap(), cell_response(&img, &r).unwrap());
    }
    let other = configure(3.0, &CellParams::default()).unwrap();
    assert!(eval.prepare(&other).is_err());
}

#[test]
fn invalid_cells_are_rejected() {
    let mut c = fig2();
    c.subunits.iter_mut().for_each(|s| s.delta = Polarity::On);
    assert!(matches!(cell_response(&common::random_image(8, 1), &c), Err(CorfError::InvalidCell(_))));
    let mut c = fig2();
    c.weights.pop();
    assert!(c.validate().is_err());
}

#[test]
fn json_round_trip() {
    let c = fig2();
    let text = c.to_json();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["source_sigma", "preferred_orientation", "subunits", "weights"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let s0 = &v["subunits"][0];
    for key in ["delta", "sigma", "rho", "phi", "sigma_prime"] {
        assert!(s0.get(key).is_some(), "{key}");
    }
    assert_eq!(CorfCell::from_json(&text).unwrap(), c);
    assert!(CorfCell::from_json("{}").is_err());
}

fn maps_strategy() -> impl Strategy<Value = (Vec<ResponseMap>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|n| {
        (
            proptest::collection::vec(proptest::collection::vec(0.0..2.0f64, 12), n),
            proptest::collection::vec(0.01..1.0f64, n),
        )
            .prop_map(|(maps, w)| (maps.into_iter().map(|d| ResponseMap::new(4, 3, d).unwrap()).collect(), w))
    })
}

proptest! {
    #[test]
    fn geometric_mean_bounds_and_and_property((maps, weights) in maps_strategy(), zero_at in 0usize..12) {
        let r = weighted_geometric_mean(&maps, &weights).unwrap();
        for i in 0..12 {
            let lo = maps.iter().map(|m| m.data()[i]).fold(f64::INFINITY, f64::min);
            let hi = maps.iter().map(|m| m.data()[i]).fold(0.0, f64::max);
            prop_assert!(r.data()[i] >= lo * (1.0 - 1e-12) && r.data()[i] <= hi * (1.0 + 1e-12));
        }
        let mut zeroed = maps.clone();
        let mut d = zeroed[0].data().to_vec();
        d[zero_at] = 0.0;
        zeroed[0] = ResponseMap::new(4, 3, d).unwrap();
        prop_assert_eq!(weighted_geometric_mean(&zeroed, &weights).unwrap().data()[zero_at], 0.0);
    }
}
