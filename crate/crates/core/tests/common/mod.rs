//! Brute-force reference transcriptions shared by the integration tests.
//! Written from the model definitions, independently of the library's
//! convolution, caching and interpolation code.
#![allow(dead_code)]

use corf::{CorfCell, Image, Polarity, PushPullCell};

/// Mirror index without edge repetition, by repeated folding.
pub fn mirror(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

pub fn pixel(img: &Image, x: i64, y: i64) -> f64 {
    img.get(mirror(x, img.width()), mirror(y, img.height()))
}

pub fn normal_density(d2: f64, s: f64) -> f64 {
    (-d2 / (2.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s)
}

/// Zero-mean DoG taps with inner std sigma/2, outer std sigma, radius ceil(3 sigma).
pub fn dog(sigma: f64, polarity: Polarity) -> (i64, Vec<f64>) {
    let r = (3.0 * sigma).ceil() as i64;
    let mut taps = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            taps.push(normal_density(d2, sigma / 2.0) - normal_density(d2, sigma));
        }
    }
    let mean: f64 = taps.iter().sum::<f64>() / taps.len() as f64;
    let sign = if polarity == Polarity::On { 1.0 } else { -1.0 };
    (r, taps.into_iter().map(|t| sign * (t - mean)).collect())
}

/// Rectified LGN response over the image domain.
pub fn lgn(img: &Image, sigma: f64, polarity: Polarity) -> Vec<f64> {
    let (r, taps) = dog(sigma, polarity);
    let side = 2 * r + 1;
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    acc += taps[((dy + r) * side + dx + r) as usize] * pixel(img, x - dx, y - dy);
                }
            }
            out[y as usize * w + x as usize] = acc.max(0.0);
        }
    }
    out
}

pub fn unit_gaussian(s: f64) -> (i64, Vec<f64>) {
    let r = (3.0 * s).ceil() as i64;
    let mut taps = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            taps.push((-((dx * dx + dy * dy) as f64) / (2.0 * s * s)).exp());
        }
    }
    let sum: f64 = taps.iter().sum();
    (r, taps.into_iter().map(|t| t / sum).collect())
}

/// Bilinear read of a mirror-extended plane.
pub fn bilinear(plane: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let (xf, yf) = (x.floor(), y.floor());
    let (ax, ay) = (x - xf, y - yf);
    let at = |i: i64, j: i64| plane[mirror(j, h) * w + mirror(i, w)];
    let (i, j) = (xf as i64, yf as i64);
    (1.0 - ax) * (1.0 - ay) * at(i, j) + ax * (1.0 - ay) * at(i + 1, j) + (1.0 - ax) * ay * at(i, j + 1)
        + ax * ay * at(i + 1, j + 1)
}

/// Gaussian-weighted sum of the LGN plane around the sub-unit centre.
#[allow(clippy::too_many_arguments)]
pub fn subunit_at(plane: &[f64], w: usize, h: usize, x: usize, y: usize, rho: f64, phi: f64, sp: f64) -> f64 {
    let (r, g) = unit_gaussian(sp);
    let side = 2 * r + 1;
    let (cx, cy) = (x as f64 + rho * phi.cos(), y as f64 + rho * phi.sin());
    let mut acc = 0.0;
    for ty in -r..=r {
        for tx in -r..=r {
            acc += g[((ty + r) * side + tx + r) as usize] * bilinear(plane, w, h, cx - tx as f64, cy - ty as f64);
        }
    }
    acc
}

/// Weighted geometric mean of sub-unit responses, pixel by pixel.
pub fn cell(img: &Image, c: &CorfCell) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let planes: Vec<Vec<f64>> = c.subunits.iter().map(|s| lgn(img, s.sigma, s.delta)).collect();
    let total: f64 = c.weights.iter().sum();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut prod = 1.0;
            for ((s, plane), wi) in c.subunits.iter().zip(&planes).zip(&c.weights) {
                prod *= subunit_at(plane, w, h, x, y, s.rho, s.phi, s.sigma_prime).powf(wi / total);
            }
            out[y * w + x] = prod;
        }
    }
    out
}

/// Pull sub-units built from the push set: each moves beta/2 further from
/// the vertical axis and swaps polarity.
pub fn pull_from(push: &CorfCell, beta: f64) -> CorfCell {
    let mut out = push.clone();
    for s in &mut out.subunits {
        let (x, y) = (s.rho * s.phi.cos(), s.rho * s.phi.sin());
        let g = if x.abs() < 1e-9 { 0.0 } else { x.signum() * beta / 2.0 };
        s.rho = (x + g).hypot(y);
        s.phi = y.atan2(x + g).rem_euclid(std::f64::consts::TAU);
        s.sigma_prime = push.blur.base_factor * s.sigma + push.blur.slope * s.rho;
        s.delta = if s.delta == Polarity::On { Polarity::Off } else { Polarity::On };
    }
    out
}

/// Unrectified push minus k times pull.
pub fn pushpull(img: &Image, pp: &PushPullCell) -> Vec<f64> {
    let pull = pull_from(&pp.push, pp.beta);
    cell(img, &pp.push)
        .into_iter()
        .zip(cell(img, &pull))
        .map(|(a, b)| a - pp.k * b)
        .collect()
}

pub fn random_image(side: usize, seed: u64) -> Image {
    let mut rng = corf::rng::SeededRng::new(seed);
    Image::from_fn(side, side, |_, _| rng.uniform()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
