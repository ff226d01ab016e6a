//! Additive Gaussian pixel corruption and feature-level stability scoring.

use rayon::prelude::*;
use serde::Serialize;

use crate::bank::{apply_bank, FeatureTensor, FilterBank};
use crate::error::{CorfError, Result};
use crate::imagecore::Image;
use crate::rng::{mix_seed, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Noise standard deviation on the `[0, 1]` intensity scale.
    pub sigma_noise: f64,
    /// Fraction of pixels corrupted.
    pub percent: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_noise: f64, percent: f64, seed: u64) -> Result<Self> {
        if !(sigma_noise >= 0.0 && sigma_noise.is_finite()) {
            return Err(CorfError::InvalidParameter(format!("noise sigma must be >= 0, got {sigma_noise}")));
        }
        if !(0.0..=1.0).contains(&percent) {
            return Err(CorfError::InvalidParameter(format!("corruption fraction must be in [0, 1], got {percent}")));
        }
        Ok(NoiseSpec {
            sigma_noise,
            percent,
            seed,
        })
    }

    pub fn corrupted_count(&self, pixels: usize) -> usize {
        // tolerate 0.3 * 10 = 2.9999999999999996
        ((self.percent * pixels as f64) + 1e-9).floor() as usize
    }
}

/// A corrupted image with the selected pixels and their pre-clamp deltas.
#[derive(Clone, Debug)]
pub struct Corruption {
    pub image: Image,
    pub indices: Vec<usize>,
    pub deltas: Vec<f64>,
}

pub fn corrupt_detailed(image: &Image, spec: &NoiseSpec) -> Corruption {
    let n = image.data().len();
    let mut rng = SeededRng::new(spec.seed);
    let indices = rng.sample_indices(n, spec.corrupted_count(n));
    let mut data = image.data().to_vec();
    let mut deltas = Vec::with_capacity(indices.len());
    for &i in &indices {
        let d = spec.sigma_noise * rng.normal();
        deltas.push(d);
        data[i] = (data[i] + d).clamp(0.0, 1.0);
    }
    let image = Image::new(image.width(), image.height(), data).expect("clamped values are valid");
    Corruption { image, indices, deltas }
}

pub fn corrupt(image: &Image, spec: &NoiseSpec) -> Image {
    corrupt_detailed(image, spec).image
}

/// Cosine similarity of two flattened tensors; 1 when both are all zero.
pub fn feature_stability(clean: &FeatureTensor, noisy: &FeatureTensor) -> Result<f64> {
    if clean.shape() != noisy.shape() {
        return Err(CorfError::Dimension(format!(
            "tensor shapes {:?} and {:?} differ",
            clean.shape(),
            noisy.shape()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in clean.data().iter().zip(noisy.data()) {
        let (a, b) = (*a as f64, *b as f64);
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    Ok(match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0),
    })
}

fn peak(t: &FeatureTensor) -> f64 {
    t.data().iter().fold(0.0f64, |m, v| m.max(*v as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub image: String,
    pub sigma_noise: f64,
    /// Corruption level in percent of pixels.
    pub percent: f64,
    pub stability: f64,
    pub clean_peak: f64,
    pub noisy_peak: f64,
}

/// Runs every `(image, sigma_noise, percent)` cell. Each cell draws its noise
/// from `seed` mixed with the grid indices, so results do not depend on
/// scheduling.
pub fn noise_sweep(
    images: &[(String, Image)],
    bank: &FilterBank,
    sigmas: &[f64],
    percents: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let clean: Vec<FeatureTensor> = images
        .par_iter()
        .map(|(_, img)| apply_bank(img, bank))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for ii in 0..images.len() {
        for (si, &s) in sigmas.iter().enumerate() {
            for (pi, &p) in percents.iter().enumerate() {
                cells.push((ii, si, s, pi, p));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(ii, si, s, pi, p)| {
            let spec = NoiseSpec::new(s, p / 100.0, mix_seed(seed, &[ii as u64, si as u64, pi as u64]))?;
            let noisy = apply_bank(&corrupt(&images[ii].1, &spec), bank)?;
            Ok(SweepRow {
                image: images[ii].0.clone(),
                sigma_noise: s,
                percent: p,
                stability: feature_stability(&clean[ii], &noisy)?,
                clean_peak: peak(&clean[ii]),
                noisy_peak: peak(&noisy),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("image,sigma_noise,percent,stability,clean_peak,noisy_peak\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.image, r.sigma_noise, r.percent, r.stability, r.clean_peak, r.noisy_peak
        ));
    }
    out
}

/// Parses `a..b:step` (inclusive) or a comma-separated list.
pub fn parse_range_list(text: &str) -> Result<Vec<f64>> {
    let bad = || CorfError::InvalidParameter(format!("bad list '{text}'"));
    if let Some((range, step)) = text.split_once(':') {
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        let (a, b, step): (f64, f64, f64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if !(step > 0.0 && b >= a) {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize + 1;
        return Ok((0..n).map(|i| a + i as f64 * step).collect());
    }
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}
