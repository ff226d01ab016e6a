//! Model LGN cells: centre-on / centre-off difference-of-Gaussians kernels
//! and their half-wave rectified responses.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{CorfError, Result};
use crate::imagecore::{convolve_differences, Image, Kernel, ResponseMap};

pub const DEFAULT_TRUNCATION: f64 = 3.0;

/// Receptive-field polarity of an LGN cell or sub-unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Polarity {
    /// Centre-on, `delta = +1`.
    On,
    /// Centre-off, `delta = -1`.
    Off,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::On => 1.0,
            Polarity::Off => -1.0,
        }
    }

    pub fn flipped(self) -> Polarity {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

impl From<Polarity> for i8 {
    fn from(p: Polarity) -> i8 {
        match p {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }
}

impl TryFrom<i8> for Polarity {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(Polarity::On),
            -1 => Ok(Polarity::Off),
            other => Err(format!("polarity must be +1 or -1, got {other}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DogSpec {
    /// Standard deviation of the outer Gaussian; the inner one uses `sigma / 2`.
    pub sigma: f64,
    pub polarity: Polarity,
    /// Kernel half-width in units of `sigma`.
    pub truncation: f64,
}

impl DogSpec {
    pub fn new(sigma: f64, polarity: Polarity) -> Result<Self> {
        let spec = DogSpec {
            sigma,
            polarity,
            truncation: DEFAULT_TRUNCATION,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_truncation(mut self, truncation: f64) -> Result<Self> {
        self.truncation = truncation;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(CorfError::InvalidParameter(format!(
                "DoG sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.truncation >= 2.0 && self.truncation.is_finite()) {
            return Err(CorfError::InvalidParameter(format!(
                "DoG truncation must be at least 2, got {}",
                self.truncation
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        (self.truncation * self.sigma).ceil() as usize
    }
}

/// Discrete DoG kernel, shifted so its taps sum to zero.
pub fn dog_kernel(spec: &DogSpec) -> Result<Kernel> {
    spec.validate()?;
    let r = spec.radius() as i64;
    let side = (2 * r + 1) as usize;
    let outer = spec.sigma;
    let inner = 0.5 * spec.sigma;
    let gauss = |d2: f64, s: f64| (-d2 / (2.0 * s * s)).exp() / (2.0 * PI * s * s);

    let mut taps = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            taps.push(gauss(d2, inner) - gauss(d2, outer));
        }
    }
    let mean = taps.iter().sum::<f64>() / taps.len() as f64;
    let sign = spec.polarity.sign();
    for t in &mut taps {
        *t = sign * (*t - mean);
    }
    Kernel::new(side, taps)
}

/// Rectified LGN response `max(0, I * DoG)`, evaluated on differences from
/// the centre pixel so flat regions give exact zeros.
pub fn lgn_response(image: &Image, spec: &DogSpec) -> Result<ResponseMap> {
    let kernel = dog_kernel(spec)?;
    Ok(convolve_differences(image, &kernel)?.rectified())
}

/// Unrectified centre-on response `I * DoG+`.
pub fn lgn_linear(image: &Image, sigma: f64, truncation: f64) -> Result<ResponseMap> {
    let spec = DogSpec::new(sigma, Polarity::On)?.with_truncation(truncation)?;
    convolve_differences(image, &dog_kernel(&spec)?)
}

/// Rectified centre-on and centre-off maps from a single convolution.
///
/// Negating every tap negates every accumulated sum exactly, so the off map
/// is bit-identical to `lgn_response` with `Polarity::Off`.
#[derive(Clone, Debug)]
pub struct LgnPair {
    pub on: ResponseMap,
    pub off: ResponseMap,
}

impl LgnPair {
    pub fn compute(image: &Image, sigma: f64, truncation: f64) -> Result<Self> {
        let linear = lgn_linear(image, sigma, truncation)?;
        Ok(LgnPair {
            on: linear.rectified(),
            off: linear.map(|v| (-v).max(0.0)),
        })
    }

    pub fn select(&self, polarity: Polarity) -> &ResponseMap {
        match polarity {
            Polarity::On => &self.on,
            Polarity::Off => &self.off,
        }
    }
}
