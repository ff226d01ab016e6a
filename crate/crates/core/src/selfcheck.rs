//! Embedded invariant suite run by `corf selfcheck`.

use std::fmt;

use crate::cell::{configure, rotate_set, CellParams, CorfCell};
use crate::imagecore::{reflect_index, Image, Kernel};
use crate::lgn::{dog_kernel, DogSpec, Polarity};
use crate::pushpull::{pushpull_response, PushPullCell};
use crate::rng::SeededRng;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Direct per-pixel transcription of the model, without caching or separable
/// shortcuts. Quadratic in kernel size; meant for small fixtures.
pub mod literal {
    use super::*;

    fn image_at(image: &Image, x: i64, y: i64) -> f64 {
        image.get(reflect_index(x, image.width()), reflect_index(y, image.height()))
    }

    /// Rectified DoG response at an integer position of the reflect-extended plane.
    pub fn lgn_at(image: &Image, kernel: &Kernel, x: i64, y: i64) -> f64 {
        let x = reflect_index(x, image.width()) as i64;
        let y = reflect_index(y, image.height()) as i64;
        let r = kernel.radius() as i64;
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                acc += kernel.tap(dx, dy) * image_at(image, x - dx, y - dy);
            }
        }
        acc.max(0.0)
    }

    fn lgn_bilinear(image: &Image, kernel: &Kernel, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let v = |dx: i64, dy: i64| lgn_at(image, kernel, x0 + dx, y0 + dy);
        (1.0 - fy) * ((1.0 - fx) * v(0, 0) + fx * v(1, 0)) + fy * ((1.0 - fx) * v(0, 1) + fx * v(1, 1))
    }

    /// Cell response at one pixel: Gaussian-weighted sum of the shifted LGN
    /// response per sub-unit, combined by weighted geometric mean.
    pub fn cell_at(image: &Image, cell: &CorfCell, x: usize, y: usize) -> f64 {
        let total: f64 = cell.weights.iter().sum();
        let mut log_acc = 0.0;
        for (s, w) in cell.subunits.iter().zip(&cell.weights) {
            let kernel = dog_kernel(
                &DogSpec::new(s.sigma, s.delta)
                    .and_then(|d| d.with_truncation(cell.truncation))
                    .expect("valid sub-unit"),
            )
            .expect("valid kernel");
            let g = Kernel::gaussian(s.sigma_prime).expect("valid blur");
            let r = g.radius() as i64;
            let (dx, dy) = s.offset();
            let mut acc = 0.0;
            for ty in -r..=r {
                for tx in -r..=r {
                    let px = x as f64 + dx - tx as f64;
                    let py = y as f64 + dy - ty as f64;
                    acc += g.tap(tx, ty) * lgn_bilinear(image, &kernel, px, py);
                }
            }
            if acc <= 0.0 {
                return 0.0;
            }
            log_acc += w * acc.ln();
        }
        (log_acc / total).exp()
    }

    pub fn pushpull_at(image: &Image, cell: &PushPullCell, x: usize, y: usize) -> f64 {
        cell_at(image, &cell.push, x, y) - cell.k * cell_at(image, &cell.pull, x, y)
    }
}

fn random_image(side: usize, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    Image::from_fn(side, side, |_, _| rng.uniform()).expect("unit range")
}

fn dog_zero_sum() -> Check {
    let mut worst: f64 = 0.0;
    let mut mirrored = true;
    for sigma in [1.0, 2.5, 5.0] {
        let on = dog_kernel(&DogSpec::new(sigma, Polarity::On).expect("valid")).expect("valid");
        let off = dog_kernel(&DogSpec::new(sigma, Polarity::Off).expect("valid")).expect("valid");
        worst = worst.max(on.sum().abs()).max(off.sum().abs());
        mirrored &= on.taps().iter().zip(off.taps()).all(|(a, b)| *a == -*b);
    }
    Check {
        name: "dog-zero-sum",
        passed: worst <= 1e-12 && mirrored,
        detail: format!("max |sum| = {worst:.3e}, off = -on: {mirrored}"),
    }
}

fn oracle_equivalence() -> Check {
    let result = (|| -> crate::Result<f64> {
        let cell = configure(2.0, &CellParams::default())?;
        let pp = PushPullCell::new(cell.clone(), 2.0, 1.8)?;
        let image = random_image(16, 16);
        let fast = crate::cell::cell_response(&image, &cell)?;
        let fast_pp = pushpull_response(&image, &pp, false)?;
        let mut worst: f64 = 0.0;
        for y in 0..16 {
            for x in 0..16 {
                worst = worst.max((fast.get(x, y) - literal::cell_at(&image, &cell, x, y)).abs());
                worst = worst.max((fast_pp.get(x, y) - literal::pushpull_at(&image, &pp, x, y)).abs());
            }
        }
        Ok(worst)
    })();
    match result {
        Ok(worst) => Check {
            name: "oracle-16x16",
            passed: worst <= 1e-9,
            detail: format!("max |pipeline - literal| = {worst:.3e}"),
        },
        Err(e) => Check {
            name: "oracle-16x16",
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Peak response of the sigma = 2 cell when the edge is rotated away from
/// its preferred orientation.
pub fn tuning_curve(cell: &CorfCell, deviations_deg: &[f64]) -> crate::Result<Vec<f64>> {
    let image = crate::cell::edge_stimulus(20);
    deviations_deg
        .iter()
        .map(|d| {
            let rotated = rotate_set(cell, d.to_radians());
            Ok(crate::cell::cell_response(&image, &rotated)?.max())
        })
        .collect()
}

fn tuning() -> Check {
    let deviations = [0.0, 15.0, 30.0, 45.0, 90.0];
    let result = configure(2.0, &CellParams::default()).and_then(|c| tuning_curve(&c, &deviations));
    match result {
        Ok(curve) => {
            let peak = curve[0];
            let monotone = curve[..4].windows(2).all(|w| w[1] <= w[0]);
            let negligible = curve[3..].iter().all(|v| *v <= 0.05 * peak);
            let rel: Vec<String> = curve.iter().map(|v| format!("{:.3}", v / peak)).collect();
            Check {
                name: "tuning-curve",
                passed: peak > 0.0 && monotone && negligible,
                detail: format!("relative peaks at 0/15/30/45/90 deg = [{}]", rel.join(", ")),
            }
        }
        Err(e) => Check {
            name: "tuning-curve",
            passed: false,
            detail: e.to_string(),
        },
    }
}

pub fn run() -> Vec<Check> {
    vec![dog_zero_sum(), oracle_equivalence(), tuning()]
}

#[cfg(test)]
mod tests {
    #[test]
    fn embedded_suite_passes() {
        for c in super::run() {
            assert!(c.passed, "{c}");
        }
    }
}
