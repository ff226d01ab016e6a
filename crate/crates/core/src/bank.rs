//! Multi-scale, multi-orientation push-pull filter bank and the feature
//! tensor it produces.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{configure, even_orientations, CellEvaluator, CellParams};
use crate::error::{CorfError, Result};
use crate::imagecore::{Image, ResponseMap};
use crate::pushpull::{pushpull_maps_with, PushPullCell};

pub const DEFAULT_K: f64 = 1.8;
pub const DEFAULT_ORIENTATIONS: usize = 12;

/// How the push/pull separation is derived from each scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BetaPolicy {
    /// `beta = factor * sigma`; `auto` is factor 1.
    SigmaMultiple(f64),
    Fixed(f64),
}

impl Default for BetaPolicy {
    fn default() -> Self {
        BetaPolicy::SigmaMultiple(1.0)
    }
}

impl BetaPolicy {
    pub fn beta(&self, sigma: f64) -> f64 {
        match *self {
            BetaPolicy::SigmaMultiple(f) => f * sigma,
            BetaPolicy::Fixed(b) => b,
        }
    }

    /// Parses `auto`, `<x>sigma` (multiple of sigma) or a plain pixel count.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let bad = || CorfError::InvalidParameter(format!("bad beta policy '{text}'"));
        let policy = if t.eq_ignore_ascii_case("auto") {
            BetaPolicy::SigmaMultiple(1.0)
        } else if let Some(f) = t.strip_suffix("sigma") {
            BetaPolicy::SigmaMultiple(f.trim().parse().map_err(|_| bad())?)
        } else {
            BetaPolicy::Fixed(t.parse().map_err(|_| bad())?)
        };
        let v = match policy {
            BetaPolicy::SigmaMultiple(v) | BetaPolicy::Fixed(v) => v,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(bad());
        }
        Ok(policy)
    }
}

/// Evenly spaced scales `start, start + step, ..., end` (end inclusive when on grid).
pub fn sigma_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && end >= start && step > 0.0) || !(start.is_finite() && end.is_finite() && step.is_finite()) {
        return Err(CorfError::InvalidParameter(format!(
            "sigma grid needs 0 < start <= end and step > 0, got {start}..{end} step {step}"
        )));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

pub fn default_sigmas() -> Vec<f64> {
    sigma_grid(1.0, 5.0, 0.25).expect("default grid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub sigmas: Vec<f64>,
    pub orientations: Vec<f64>,
    pub k: f64,
    pub beta: BetaPolicy,
    /// Rectify `push - k * pull` before superposition.
    pub rectify: bool,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            sigmas: default_sigmas(),
            orientations: even_orientations(DEFAULT_ORIENTATIONS),
            k: DEFAULT_K,
            beta: BetaPolicy::default(),
            rectify: true,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.orientations.is_empty() {
            return Err(CorfError::InvalidParameter("bank needs at least one sigma and one orientation".into()));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CorfError::InvalidParameter("sigmas must be positive and strictly increasing".into()));
        }
        let tau = std::f64::consts::TAU;
        if self.orientations.iter().any(|o| !(*o >= 0.0 && *o < tau)) || self.orientations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CorfError::InvalidParameter(
                "orientations must be strictly increasing within [0, 2pi)".into(),
            ));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(CorfError::InvalidParameter(format!("k must be >= 0, got {}", self.k)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub config: BankConfig,
    /// One push-pull cell per sigma, at orientation 0.
    pub cells: Vec<PushPullCell>,
}

#[derive(Serialize)]
struct BankDoc<'a> {
    config: &'a BankConfig,
    cells: Vec<CellDoc<'a>>,
}

#[derive(Serialize)]
struct CellDoc<'a> {
    beta: f64,
    k: f64,
    push: &'a crate::cell::CorfCell,
    pull: &'a crate::cell::CorfCell,
}

impl FilterBank {
    pub fn channels(&self) -> usize {
        self.cells.len()
    }

    pub fn to_json(&self) -> String {
        let doc = BankDoc {
            config: &self.config,
            cells: self
                .cells
                .iter()
                .map(|c| CellDoc {
                    beta: c.beta,
                    k: c.k,
                    push: &c.push,
                    pull: &c.pull,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("bank serializes")
    }

    /// The same geometry with every cell evaluated at inhibition strength `k`.
    pub fn with_k(&self, k: f64) -> FilterBank {
        let mut bank = self.clone();
        bank.config.k = k;
        bank.cells = self.cells.iter().map(|c| c.with_k(k)).collect();
        bank
    }

    /// Keeps sub-unit positions and evaluates channel `i` at scale `sigmas[i]`.
    pub fn with_eval_sigmas(&self, sigmas: &[f64]) -> Result<FilterBank> {
        if sigmas.len() != self.cells.len() || sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(CorfError::InvalidParameter("one positive sigma per channel required".into()));
        }
        let mut bank = self.clone();
        bank.cells = self.cells.iter().zip(sigmas).map(|(c, s)| c.with_sigma(*s)).collect();
        Ok(bank)
    }
}

pub fn build_bank(config: BankConfig) -> Result<FilterBank> {
    build_bank_with(config, &CellParams::default())
}

pub fn build_bank_with(config: BankConfig, params: &CellParams) -> Result<FilterBank> {
    config.validate()?;
    let cells = config
        .sigmas
        .iter()
        .map(|&sigma| {
            let push = configure(sigma, params)
                .map_err(|e| CorfError::Configuration(format!("sigma {sigma}: {e}")))?;
            PushPullCell::new(push, config.beta.beta(sigma), config.k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FilterBank { config, cells })
}

/// Channel-major `f32` feature stack, one channel per bank scale.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

pub const TENSOR_MAGIC: &[u8; 4] = b"CORF";
pub const TENSOR_VERSION: u32 = 1;
pub const TENSOR_HEADER_LEN: usize = 20;

impl FeatureTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || data.len() != height * width * channels {
            return Err(CorfError::Dimension(format!(
                "tensor {height}x{width}x{channels} with {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CorfError::Data("tensor values must be finite and non-negative".into()));
        }
        Ok(FeatureTensor {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_map(&self, c: usize) -> ResponseMap {
        ResponseMap::from_raw(self.width, self.height, self.channel(c).iter().map(|v| *v as f64).collect())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| *v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        for v in [TENSOR_VERSION, self.height as u32, self.width as u32, self.channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < TENSOR_HEADER_LEN || &bytes[..4] != TENSOR_MAGIC {
            return Err(CorfError::Format("missing CORF tensor header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let version = word(0);
        if version != TENSOR_VERSION {
            return Err(CorfError::Format(format!("unsupported tensor version {version}")));
        }
        let (h, w, c) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let expected = h
            .checked_mul(w)
            .and_then(|p| p.checked_mul(c))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| CorfError::Format("tensor dimensions overflow".into()))?;
        let payload = &bytes[TENSOR_HEADER_LEN..];
        if payload.len() != expected {
            return Err(CorfError::Format(format!(
                "payload is {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        FeatureTensor::new(h, w, c, data)
    }
}

pub fn export_tensor(tensor: &FeatureTensor, path: impl AsRef<Path>) -> Result<()> {
    crate::fsutil::write_atomic(path.as_ref(), &tensor.to_bytes())
}

pub fn import_tensor(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| CorfError::io(path, e))?;
    FeatureTensor::from_bytes(&bytes)
}

/// Per-orientation push-pull maps of channel `index`, in orientation order.
pub fn orientation_maps(image: &Image, bank: &FilterBank, index: usize) -> Result<Vec<ResponseMap>> {
    let cell = bank
        .cells
        .get(index)
        .ok_or_else(|| CorfError::InvalidParameter(format!("no channel {index}")))?;
    let mut eval = CellEvaluator::new(image, cell.push.source_sigma, cell.push.truncation)?;
    bank.config
        .orientations
        .iter()
        .map(|&psi| {
            let maps = pushpull_maps_with(&mut eval, &cell.rotated(psi))?;
            Ok(if bank.config.rectify { maps.rectified() } else { maps.signed })
        })
        .collect()
}

fn channel_response(image: &Image, bank: &FilterBank, index: usize) -> Result<ResponseMap> {
    let maps = orientation_maps(image, bank, index)?;
    crate::cell::orientation_superposition(&maps)
}

/// Superposed push-pull response per scale, stacked in scale order.
pub fn apply_bank(image: &Image, bank: &FilterBank) -> Result<FeatureTensor> {
    let channels = (0..bank.channels())
        .into_par_iter()
        .map(|i| channel_response(image, bank, i))
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = (image.width(), image.height());
    let mut data = Vec::with_capacity(channels.len() * w * h);
    for ch in &channels {
        // the signed variant can go negative; tensors hold activations only
        data.extend(ch.data().iter().map(|v| v.max(0.0) as f32));
    }
    FeatureTensor::new(h, w, channels.len(), data)
}
