//! Synthetic stimuli: edges, noise textures, the fixture suite used for
//! robustness checks and the oriented-bar classification dataset.

use std::f64::consts::PI;

use crate::imagecore::Image;
use crate::rng::SeededRng;

/// Anti-aliased straight edge through the image centre. Pixels on the side
/// the unit normal `(cos angle, sin angle)` points to are bright.
pub fn ramp_edge(size: usize, angle: f64) -> Image {
    let c = (size as f64 - 1.0) / 2.0;
    let (nx, ny) = (angle.cos(), angle.sin());
    Image::from_fn(size, size, |x, y| 0.5 + (x as f64 - c) * nx + (y as f64 - c) * ny).expect("valid image")
}

/// Independent black/white pixels with probability one half.
pub fn binary_noise(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    Image::from_fn(width, height, |_, _| if rng.coin() { 1.0 } else { 0.0 }).expect("valid image")
}

/// Coverage of an anti-aliased band of half-width `half` at signed distance `d`.
fn band(d: f64, half: f64) -> f64 {
    (half + 0.5 - d.abs()).clamp(0.0, 1.0)
}

/// Parallel bars along `angle` (direction of the bar axis), centred on the
/// image centre.
pub fn bars(size: usize, angle: f64, offsets: &[f64], thickness: f64, background: f64, foreground: f64) -> Image {
    let c = (size as f64 - 1.0) / 2.0;
    let (nx, ny) = (-angle.sin(), angle.cos());
    Image::from_fn(size, size, |x, y| {
        let d = (x as f64 - c) * nx + (y as f64 - c) * ny;
        let cover = offsets.iter().map(|o| band(d - o, thickness / 2.0)).fold(0.0, f64::max);
        background + (foreground - background) * cover
    })
    .expect("valid image")
}

/// Ten deterministic 32x32 test images covering edges, lines, corners,
/// blobs and textures.
pub fn fixture_suite() -> Vec<(String, Image)> {
    let n = 32;
    let c = (n as f64 - 1.0) / 2.0;
    let disk = Image::from_fn(n, n, |x, y| {
        let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
        0.8 - 0.6 * (r - 9.0 + 0.5).clamp(0.0, 1.0)
    })
    .expect("valid");
    let square = Image::from_fn(n, n, |x, y| {
        if (8..24).contains(&x) && (8..24).contains(&y) {
            0.15
        } else {
            0.85
        }
    })
    .expect("valid");
    let checker = Image::from_fn(n, n, |x, y| if (x / 8 + y / 8) % 2 == 0 { 0.9 } else { 0.1 }).expect("valid");
    let grating = Image::from_fn(n, n, |x, y| 0.5 + 0.4 * (2.0 * PI * (x as f64 + 0.5 * y as f64) / 9.0).sin())
        .expect("valid");
    let cross = {
        let a = bars(n, PI / 4.0, &[0.0], 3.0, 0.1, 0.9);
        let b = bars(n, 3.0 * PI / 4.0, &[0.0], 3.0, 0.1, 0.9);
        Image::new(n, n, a.data().iter().zip(b.data()).map(|(p, q)| p.max(*q)).collect()).expect("valid")
    };
    let triangle = Image::from_fn(n, n, |x, y| {
        let (x, y) = (x as f64, y as f64);
        if y > 6.0 && y < 26.0 && (x - c).abs() < (y - 6.0) * 0.6 {
            0.9
        } else {
            0.2
        }
    })
    .expect("valid");
    let blobs = {
        let mut rng = SeededRng::new(2024);
        let centres: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| (rng.range(4.0, 28.0), rng.range(4.0, 28.0), rng.range(2.5, 5.0)))
            .collect();
        Image::from_fn(n, n, |x, y| {
            let v: f64 = centres
                .iter()
                .map(|(cx, cy, r)| (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * r * r)).exp())
                .sum();
            0.1 + 0.8 * v.min(1.0)
        })
        .expect("valid")
    };
    vec![
        ("edge_vertical".into(), ramp_edge(n, 0.0)),
        ("edge_oblique".into(), ramp_edge(n, PI / 3.0)),
        ("bar_horizontal".into(), bars(n, 0.0, &[-5.0, 5.0], 3.0, 0.2, 0.8)),
        ("disk".into(), disk),
        ("square".into(), square),
        ("checker".into(), checker),
        ("grating".into(), grating),
        ("cross".into(), cross),
        ("triangle".into(), triangle),
        ("blobs".into(), blobs),
    ]
}

pub const BAR_CLASS_ANGLES_DEG: [f64; 3] = [0.0, 60.0, 120.0];

/// One labelled example of the oriented-bar dataset.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Image,
    pub label: usize,
}

/// Oriented-bar textures: 1 to 3 parallel bars at the class orientation
/// near the image centre, random contrast polarity, random levels and
/// additive pixel noise. Classes are interleaved.
pub fn oriented_bar_dataset(seed: u64, per_class: usize, size: usize) -> Vec<Sample> {
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::with_capacity(per_class * BAR_CLASS_ANGLES_DEG.len());
    for _ in 0..per_class {
        for (label, deg) in BAR_CLASS_ANGLES_DEG.iter().enumerate() {
            let angle = (deg + rng.range(-4.0, 4.0)).to_radians();
            let count = 1 + rng.below(3) as usize;
            let spacing = rng.range(6.0, 10.0);
            let jitter = rng.range(-2.0, 2.0);
            let offsets: Vec<f64> = (0..count)
                .map(|j| (j as f64 - (count as f64 - 1.0) / 2.0) * spacing + jitter)
                .collect();
            let thickness = rng.range(2.0, 4.0);
            let dark = rng.range(0.0, 0.3);
            let light = rng.range(0.7, 1.0);
            let (bg, fg) = if rng.coin() { (dark, light) } else { (light, dark) };
            let clean = bars(size, angle, &offsets, thickness, bg, fg);
            let data = clean
                .data()
                .iter()
                .map(|v| (v + 0.03 * rng.normal()).clamp(0.0, 1.0))
                .collect();
            out.push(Sample {
                image: Image::new(size, size, data).expect("valid"),
                label,
            });
        }
    }
    out
}
