mod common;

use std::f64::consts::PI;

use corf::cell::edge_stimulus;
use corf::pushpull::pushpull_maps;
use corf::synth::binary_noise;
use corf::{
    cell_response, configure, pull_set, pushpull_response, shift_set, CellParams, CorfCell, Polarity, PushPullCell,
    SubUnit,
};

fn fig2() -> CorfCell {
    configure(2.0, &CellParams::default()).unwrap()
}

fn single(rho: f64, phi: f64) -> CorfCell {
    let mut c = fig2();
    c.subunits = vec![
        SubUnit { delta: Polarity::On, sigma: 2.0, rho, phi, sigma_prime: 0.5 },
        SubUnit { delta: Polarity::Off, sigma: 2.0, rho: 1.0, phi: PI / 2.0, sigma_prime: 0.5 },
    ];
    c.weights = vec![1.0, 1.0];
    c
}

#[test]
fn shift_examples() {
    let s = shift_set(&single(2.0, 0.0), 1.0).unwrap();
    assert!((s.subunits[0].rho - 2.5).abs() < 1e-12 && s.subunits[0].phi.abs() < 1e-12);
    let s = shift_set(&single(2.0, PI), 1.0).unwrap();
    assert!((s.subunits[0].rho - 2.5).abs() < 1e-12 && (s.subunits[0].phi - PI).abs() < 1e-12);
    // on the vertical axis nothing moves
    assert!((s.subunits[1].rho - 1.0).abs() < 1e-12);
    assert_eq!(shift_set(&fig2(), 0.0).unwrap(), fig2());
    assert!(shift_set(&fig2(), -1.0).is_err());
}

#[test]
fn pull_swaps_polarity_and_keeps_weights() {
    let c = fig2();
    let p = pull_set(&c, 2.0).unwrap();
    assert_eq!(p.count(Polarity::On), c.count(Polarity::Off));
    assert_eq!(p.count(Polarity::Off), c.count(Polarity::On));
    assert_eq!(p.weights, c.weights);
    for (a, b) in c.subunits.iter().zip(&p.subunits) {
        assert_eq!(b.delta, a.delta.flipped());
        assert!(b.rho > a.rho);
        assert_eq!(b.sigma, a.sigma);
    }
    assert_eq!(pull_set(&pull_set(&c, 0.0).unwrap(), 0.0).unwrap(), c);
    assert!(common::max_abs_diff(
        &p.subunits.iter().map(|s| s.rho).collect::<Vec<_>>(),
        &common::pull_from(&c, 2.0).subunits.iter().map(|s| s.rho).collect::<Vec<_>>()
    ) < 1e-12);
}

#[test]
fn polarity_duality() {
    let c = fig2();
    let edge = edge_stimulus(12);
    let pull = cell_response(&edge, &pull_set(&c, 2.0).unwrap()).unwrap();
    let push_inv = cell_response(&edge.inverted(), &shift_set(&c, 2.0).unwrap()).unwrap();
    assert!(common::max_abs_diff(pull.data(), push_inv.data()) <= 1e-9);
}

#[test]
fn pipeline_matches_literal_sums() {
    let pp = PushPullCell::new(fig2(), 2.0, 1.8).unwrap();
    let img = common::random_image(16, 77);
    let fast = pushpull_response(&img, &pp, false).unwrap();
    assert!(common::max_abs_diff(fast.data(), &common::pushpull(&img, &pp)) <= 1e-9);
    let rect = pushpull_response(&img, &pp, true).unwrap();
    for (r, s) in rect.data().iter().zip(fast.data()) {
        assert_eq!(*r, s.max(0.0));
    }
}

#[test]
fn signed_map_is_push_minus_k_pull() {
    let pp = PushPullCell::new(fig2(), 2.0, 1.8).unwrap();
    let maps = pushpull_maps(&common::random_image(20, 3), &pp).unwrap();
    for i in 0..maps.signed.data().len() {
        let expect = maps.push.data()[i] - 1.8 * maps.pull.data()[i];
        assert!((maps.signed.data()[i] - expect).abs() <= 1e-12);
    }
    assert!(maps.rectified().data().iter().all(|v| *v >= 0.0));
}

#[test]
fn no_inhibition_reduces_to_the_push_cell() {
    let img = common::random_image(18, 5);
    let pp = PushPullCell::new(fig2(), 2.0, 0.0).unwrap();
    assert_eq!(pushpull_response(&img, &pp, true).unwrap(), cell_response(&img, &fig2()).unwrap());
}

#[test]
fn preferred_edge_keeps_its_peak() {
    let img = edge_stimulus(20);
    let pp = PushPullCell::new(fig2(), 2.0, 1.8).unwrap();
    let push = cell_response(&img, &fig2()).unwrap().max();
    let both = pushpull_response(&img, &pp, true).unwrap().max();
    assert!((both / push - 1.0).abs() <= 0.02, "{both} vs {push}");
}

#[test]
fn texture_is_suppressed() {
    let img = binary_noise(48, 48, 99);
    let pp = PushPullCell::new(fig2(), 2.0, 1.8).unwrap();
    let push = cell_response(&img, &fig2()).unwrap().mean();
    let both = pushpull_response(&img, &pp, true).unwrap().mean();
    assert!(both < push, "{both} vs {push}");
}

#[test]
fn monotone_in_k() {
    let img = common::random_image(24, 8);
    let base = PushPullCell::new(fig2(), 2.0, 0.0).unwrap();
    let maps: Vec<_> = [0.0, 0.9, 1.8, 3.6]
        .iter()
        .map(|k| pushpull_response(&img, &base.with_k(*k), true).unwrap())
        .collect();
    for w in maps.windows(2) {
        assert!(w[1].data().iter().zip(w[0].data()).all(|(b, a)| b <= a));
    }
}

/// Separation moves pull sub-units away from the edge: the small pull
/// leakage at beta = 0 vanishes, so the peak cannot drop as beta grows.
#[test]
fn separation_removes_pull_leakage_on_the_preferred_edge() {
    let img = edge_stimulus(20);
    let push = cell_response(&img, &fig2()).unwrap().max();
    let at = |beta| pushpull_response(&img, &PushPullCell::new(fig2(), beta, 1.8).unwrap(), true).unwrap().max();
    let (narrow, wide) = (at(0.0), at(4.0));
    assert!(narrow <= wide && wide <= push);
    assert!(narrow >= 0.99 * push);
    assert_eq!(wide, push);
}

#[test]
fn rejects_negative_parameters() {
    assert!(PushPullCell::new(fig2(), -0.5, 1.8).is_err());
    assert!(PushPullCell::new(fig2(), 1.0, -1.0).is_err());
    assert!(PushPullCell::new(fig2(), 1.0, f64::NAN).is_err());
}
