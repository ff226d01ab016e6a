//! CORF model simple cells.
//!
//! A cell is a set of sub-units, each pooling rectified LGN responses of one
//! polarity around a polar offset `(rho, phi)` from the cell centre. The
//! cell response is the weighted geometric mean of its sub-unit responses.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{CorfError, Result};
use crate::imagecore::{reflect_index, Image, Kernel, ResponseMap};
use crate::lgn::{LgnPair, Polarity, DEFAULT_TRUNCATION};

/// Normalizes an angle into `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Linear law for the sub-unit blur: `sigma' = base_factor * sigma + slope * rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurLaw {
    pub base_factor: f64,
    pub slope: f64,
}

impl Default for BlurLaw {
    fn default() -> Self {
        BlurLaw {
            base_factor: 0.2,
            slope: 0.05,
        }
    }
}

impl BlurLaw {
    pub fn sigma_prime(&self, sigma: f64, rho: f64) -> f64 {
        self.base_factor * sigma + self.slope * rho
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_factor > 0.0 && self.base_factor.is_finite()) || !(self.slope >= 0.0 && self.slope.is_finite()) {
            return Err(CorfError::InvalidParameter(format!(
                "blur law needs base_factor > 0 and slope >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// How a sub-unit's polar offset is applied to its blurred LGN map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMode {
    /// Sub-pixel offsets, bilinear interpolation.
    #[default]
    Bilinear,
    /// Offsets rounded to the nearest pixel.
    Nearest,
}

impl ShiftMode {
    fn is_default(&self) -> bool {
        *self == ShiftMode::Bilinear
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubUnit {
    pub delta: Polarity,
    pub sigma: f64,
    pub rho: f64,
    pub phi: f64,
    pub sigma_prime: f64,
}

impl SubUnit {
    /// Offset `(rho cos phi, rho sin phi)` of the sub-unit centre in pixels.
    pub fn offset(&self) -> (f64, f64) {
        (self.rho * self.phi.cos(), self.rho * self.phi.sin())
    }
}

/// Configuration knobs for [`configure`].
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams {
    /// Circle radii as multiples of sigma.
    pub radii: Vec<f64>,
    /// Fraction of the per-circle maximum a local maximum must reach.
    pub threshold: f64,
    /// Angular non-maximum suppression half window, in degrees.
    pub nms_half_window: usize,
    pub blur: BlurLaw,
    pub shift: ShiftMode,
    pub truncation: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        CellParams {
            radii: vec![1.0, 2.0],
            threshold: 0.2,
            nms_half_window: 5,
            blur: BlurLaw::default(),
            shift: ShiftMode::default(),
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorfCell {
    pub source_sigma: f64,
    pub preferred_orientation: f64,
    pub subunits: Vec<SubUnit>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub blur: BlurLaw,
    #[serde(default, skip_serializing_if = "ShiftMode::is_default")]
    pub shift: ShiftMode,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
}

fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION
}

impl CorfCell {
    pub fn validate(&self) -> Result<()> {
        if self.subunits.len() < 2 || self.subunits.len() != self.weights.len() {
            return Err(CorfError::InvalidCell(format!(
                "{} sub-units with {} weights",
                self.subunits.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(CorfError::InvalidCell("weights must be positive".into()));
        }
        let on = self.subunits.iter().any(|s| s.delta == Polarity::On);
        let off = self.subunits.iter().any(|s| s.delta == Polarity::Off);
        if !(on && off) {
            return Err(CorfError::InvalidCell("sub-units must include both polarities".into()));
        }
        for s in &self.subunits {
            if !(s.sigma > 0.0 && s.rho >= 0.0 && s.sigma_prime > 0.0 && s.phi.is_finite()) {
                return Err(CorfError::InvalidCell(format!("bad sub-unit {s:?}")));
            }
        }
        Ok(())
    }

    pub fn count(&self, polarity: Polarity) -> usize {
        self.subunits.iter().filter(|s| s.delta == polarity).count()
    }

    /// Same sub-unit geometry evaluated with a different LGN scale.
    /// Positions and blur widths stay fixed.
    pub fn with_sigma(&self, sigma: f64) -> CorfCell {
        let mut cell = self.clone();
        cell.source_sigma = sigma;
        for s in &mut cell.subunits {
            s.sigma = sigma;
        }
        cell
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cell serializes")
    }

    pub fn from_json(text: &str) -> Result<CorfCell> {
        let cell: CorfCell = serde_json::from_str(text).map_err(|e| CorfError::InvalidCell(e.to_string()))?;
        cell.validate()?;
        Ok(cell)
    }
}

/// Vertical step edge through the centre of a square image: dark (0) on the
/// left, bright (1) on the right, 0.5 on the centre column.
pub fn edge_stimulus(half: usize) -> Image {
    let side = 2 * half + 1;
    Image::from_fn(side, side, |x, _| match x.cmp(&half) {
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 0.5,
        std::cmp::Ordering::Greater => 1.0,
    })
    .expect("valid stimulus")
}

/// Configures a cell from the canonical vertical edge stimulus.
pub fn configure(sigma: f64, params: &CellParams) -> Result<CorfCell> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(CorfError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(params.threshold > 0.0 && params.threshold <= 1.0) {
        return Err(CorfError::InvalidParameter(format!(
            "threshold must be in (0, 1], got {}",
            params.threshold
        )));
    }
    if params.radii.is_empty() || params.radii.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(CorfError::InvalidParameter("radii must be non-negative".into()));
    }
    params.blur.validate()?;

    let radii: Vec<f64> = params.radii.iter().map(|m| m * sigma).collect();
    let max_rho = radii.iter().copied().fold(0.0, f64::max);
    let half = (max_rho + params.truncation * sigma).ceil() as usize + 2;
    let stimulus = edge_stimulus(half);
    let lgn = LgnPair::compute(&stimulus, sigma, params.truncation)?;
    let centre = half as f64;

    let mut subunits = Vec::new();
    for &rho in &radii {
        for polarity in [Polarity::On, Polarity::Off] {
            let map = lgn.select(polarity);
            let profile: Vec<f64> = (0..360)
                .map(|deg| {
                    let phi = (deg as f64).to_radians();
                    map.sample_bilinear(centre + rho * phi.cos(), centre + rho * phi.sin())
                })
                .collect();
            for deg in circular_maxima(&profile, params.threshold, params.nms_half_window) {
                let phi = (deg as f64).to_radians();
                subunits.push(SubUnit {
                    delta: polarity,
                    sigma,
                    rho,
                    phi,
                    sigma_prime: params.blur.sigma_prime(sigma, rho),
                });
            }
        }
    }
    if subunits.is_empty() {
        return Err(CorfError::Configuration(format!("no local maxima found for sigma {sigma}")));
    }

    let cell = CorfCell {
        source_sigma: sigma,
        preferred_orientation: 0.0,
        weights: gaussian_weights(&subunits),
        subunits,
        blur: params.blur,
        shift: params.shift,
        truncation: params.truncation,
    };
    cell.validate()
        .map_err(|e| CorfError::Configuration(format!("sigma {sigma}: {e}")))?;
    Ok(cell)
}

/// Indices of angular local maxima on a closed profile. A sample survives if
/// it reaches `threshold * max`, strictly exceeds the preceding samples in the
/// window and is not below the following ones, so plateaus yield one maximum.
fn circular_maxima(profile: &[f64], threshold: f64, half_window: usize) -> Vec<usize> {
    let n = profile.len();
    let peak = profile.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let floor = threshold * peak;
    (0..n)
        .filter(|&i| {
            let v = profile[i];
            v > 0.0
                && v >= floor
                && (1..=half_window).all(|j| v > profile[(i + n - j) % n] && v >= profile[(i + j) % n])
        })
        .collect()
}

/// `w_i = exp(-rho_i^2 / (2 s^2))` with `s = max(rho) / 3`.
pub fn gaussian_weights(subunits: &[SubUnit]) -> Vec<f64> {
    let max_rho = subunits.iter().map(|s| s.rho).fold(0.0, f64::max);
    if max_rho == 0.0 {
        return vec![1.0; subunits.len()];
    }
    let spread = max_rho / 3.0;
    subunits
        .iter()
        .map(|s| (-(s.rho * s.rho) / (2.0 * spread * spread)).exp())
        .collect()
}

/// Rotates every sub-unit by `psi` about the cell centre.
pub fn rotate_set(cell: &CorfCell, psi: f64) -> CorfCell {
    let mut out = cell.clone();
    for s in &mut out.subunits {
        s.phi = wrap_angle(s.phi + psi);
    }
    out.preferred_orientation = wrap_angle(cell.preferred_orientation + psi);
    out
}

fn check_shapes(maps: &[&ResponseMap]) -> Result<()> {
    if let Some(first) = maps.first() {
        if let Some(bad) = maps.iter().find(|m| !m.same_shape(first)) {
            return Err(CorfError::Dimension(format!(
                "map {}x{} does not match {}x{}",
                bad.width(),
                bad.height(),
                first.width(),
                first.height()
            )));
        }
    }
    Ok(())
}

/// Reads a blurred LGN map at the sub-unit's offset from every pixel.
fn sample_offset(blurred: &ResponseMap, s: &SubUnit, mode: ShiftMode) -> ResponseMap {
    let (w, h) = (blurred.width(), blurred.height());
    let (dx, dy) = s.offset();
    let mut data = Vec::with_capacity(w * h);
    match mode {
        ShiftMode::Nearest => {
            let (ix, iy) = (dx.round() as i64, dy.round() as i64);
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    data.push(blurred.get_reflect(x + ix, y + iy));
                }
            }
        }
        ShiftMode::Bilinear => {
            // the shift is the same for every pixel, so the interpolation
            // weights and reflected indices are computed once per axis
            let (ox, oy) = (dx.floor(), dy.floor());
            let (fx, fy) = (dx - ox, dy - oy);
            let (ox, oy) = (ox as i64, oy as i64);
            let cols: Vec<(usize, usize)> = (0..w as i64)
                .map(|x| (reflect_index(x + ox, w), reflect_index(x + ox + 1, w)))
                .collect();
            let src = blurred.data();
            for y in 0..h as i64 {
                let r0 = &src[reflect_index(y + oy, h) * w..][..w];
                let r1 = &src[reflect_index(y + oy + 1, h) * w..][..w];
                for &(c0, c1) in &cols {
                    let top = (1.0 - fx) * r0[c0] + fx * r0[c1];
                    let bottom = (1.0 - fx) * r1[c0] + fx * r1[c1];
                    data.push(((1.0 - fy) * top + fy * bottom).max(0.0));
                }
            }
        }
    }
    ResponseMap::from_raw(w, h, data)
}

/// Sub-unit response: the LGN map of the sub-unit's polarity, blurred with a
/// unit-sum Gaussian of std `sigma'` and read at offset `(rho cos phi, rho sin phi)`.
pub fn subunit_response(on: &ResponseMap, off: &ResponseMap, s: &SubUnit, mode: ShiftMode) -> Result<ResponseMap> {
    check_shapes(&[on, off])?;
    let source = match s.delta {
        Polarity::On => on,
        Polarity::Off => off,
    };
    let blurred = source.convolve(&Kernel::gaussian(s.sigma_prime)?)?;
    Ok(sample_offset(&blurred, s, mode))
}

/// Weighted geometric mean of sub-unit responses. An exact zero in any
/// factor forces a zero output.
pub fn weighted_geometric_mean(factors: &[ResponseMap], weights: &[f64]) -> Result<ResponseMap> {
    if factors.is_empty() || factors.len() != weights.len() {
        return Err(CorfError::InvalidParameter("need one weight per factor".into()));
    }
    check_shapes(&factors.iter().collect::<Vec<_>>())?;
    let total: f64 = weights.iter().sum();
    let (w, h) = (factors[0].width(), factors[0].height());
    // factors sharing a weight are multiplied first so each group costs one ln
    let mut groups: Vec<(f64, Vec<&[f64]>)> = Vec::new();
    for (f, wi) in factors.iter().zip(weights) {
        match groups.iter_mut().find(|(g, _)| g == wi) {
            Some((_, members)) => members.push(f.data()),
            None => groups.push((*wi, vec![f.data()])),
        }
    }
    let data = (0..w * h)
        .map(|i| {
            let mut acc = 0.0;
            for (wi, members) in &groups {
                let mut prod = 1.0;
                for m in members {
                    let v = m[i];
                    if v <= 0.0 {
                        return 0.0;
                    }
                    prod *= v;
                }
                acc += if prod > 0.0 && prod.is_finite() {
                    wi * prod.ln()
                } else {
                    wi * members.iter().map(|m| m[i].ln()).sum::<f64>()
                };
            }
            (acc / total).exp()
        })
        .collect();
    Ok(ResponseMap::from_raw(w, h, data))
}

/// Evaluates cells that share one LGN scale on one image, caching the
/// blurred LGN maps per `(polarity, sigma')`.
pub struct CellEvaluator {
    lgn: LgnPair,
    sigma: f64,
    blurred: BTreeMap<(i8, u64), ResponseMap>,
}

impl CellEvaluator {
    pub fn new(image: &Image, sigma: f64, truncation: f64) -> Result<Self> {
        Ok(CellEvaluator {
            lgn: LgnPair::compute(image, sigma, truncation)?,
            sigma,
            blurred: BTreeMap::new(),
        })
    }

    pub fn lgn(&self) -> &LgnPair {
        &self.lgn
    }

    /// Computes every blurred map `cell` needs. Rotations of a prepared cell
    /// need nothing new.
    pub fn prepare(&mut self, cell: &CorfCell) -> Result<()> {
        if cell.source_sigma != self.sigma {
            return Err(CorfError::InvalidParameter(format!(
                "evaluator built for sigma {} used with a sigma {} cell",
                self.sigma, cell.source_sigma
            )));
        }
        for s in &cell.subunits {
            let key = (i8::from(s.delta), s.sigma_prime.to_bits());
            if !self.blurred.contains_key(&key) {
                let map = self.lgn.select(s.delta).convolve(&Kernel::gaussian(s.sigma_prime)?)?;
                self.blurred.insert(key, map);
            }
        }
        Ok(())
    }

    pub fn subunit_maps(&self, cell: &CorfCell) -> Result<Vec<ResponseMap>> {
        cell.subunits
            .iter()
            .map(|s| {
                let key = (i8::from(s.delta), s.sigma_prime.to_bits());
                let blurred = self.blurred.get(&key).ok_or_else(|| {
                    CorfError::InvalidParameter("cell was not prepared on this evaluator".into())
                })?;
                Ok(sample_offset(blurred, s, cell.shift))
            })
            .collect()
    }

    pub fn response(&self, cell: &CorfCell) -> Result<ResponseMap> {
        cell.validate()?;
        let maps = self.subunit_maps(cell)?;
        weighted_geometric_mean(&maps, &cell.weights)
    }
}

/// Response of a CORF cell at every pixel of `image`.
pub fn cell_response(image: &Image, cell: &CorfCell) -> Result<ResponseMap> {
    cell.validate()?;
    let mut eval = CellEvaluator::new(image, cell.source_sigma, cell.truncation)?;
    eval.prepare(cell)?;
    eval.response(cell)
}

/// Pointwise maximum across maps.
pub fn orientation_superposition(maps: &[ResponseMap]) -> Result<ResponseMap> {
    let first = maps
        .first()
        .ok_or_else(|| CorfError::InvalidParameter("no maps to superpose".into()))?;
    check_shapes(&maps.iter().collect::<Vec<_>>())?;
    let mut data = first.data().to_vec();
    for m in &maps[1..] {
        for (d, v) in data.iter_mut().zip(m.data()) {
            if *v > *d {
                *d = *v;
            }
        }
    }
    Ok(ResponseMap::from_raw(first.width(), first.height(), data))
}

/// `n` orientations evenly spaced over a full turn, starting at 0.
pub fn even_orientations(n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect()
}
