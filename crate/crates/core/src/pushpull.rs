//! Push-pull inhibition: a push cell minus `k` times the response of a
//! beta-separated, contrast-inverted pull cell.

use crate::cell::{wrap_angle, CellEvaluator, CorfCell};
use crate::error::{CorfError, Result};
use crate::imagecore::{Image, ResponseMap};

#[derive(Clone, Debug, PartialEq)]
pub struct PushPullCell {
    pub push: CorfCell,
    pub pull: CorfCell,
    pub beta: f64,
    pub k: f64,
}

impl PushPullCell {
    pub fn new(push: CorfCell, beta: f64, k: f64) -> Result<Self> {
        check_non_negative("beta", beta)?;
        check_non_negative("k", k)?;
        push.validate()?;
        let pull = pull_set(&push, beta)?;
        Ok(PushPullCell { push, pull, beta, k })
    }

    /// Rotates push and pull sets together.
    pub fn rotated(&self, psi: f64) -> PushPullCell {
        PushPullCell {
            push: crate::cell::rotate_set(&self.push, psi),
            pull: crate::cell::rotate_set(&self.pull, psi),
            beta: self.beta,
            k: self.k,
        }
    }

    pub fn with_k(&self, k: f64) -> PushPullCell {
        PushPullCell { k, ..self.clone() }
    }

    /// Same geometry evaluated at a different LGN scale.
    pub fn with_sigma(&self, sigma: f64) -> PushPullCell {
        PushPullCell {
            push: self.push.with_sigma(sigma),
            pull: self.pull.with_sigma(sigma),
            beta: self.beta,
            k: self.k,
        }
    }
}

fn check_non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(CorfError::InvalidParameter(format!("{name} must be >= 0, got {v}")));
    }
    Ok(())
}

const AXIS_EPS: f64 = 1e-9;

/// Moves every sub-unit `beta / 2` further from the vertical axis through the
/// cell centre. Sub-units on the axis stay put.
pub fn shift_set(cell: &CorfCell, beta: f64) -> Result<CorfCell> {
    check_non_negative("beta", beta)?;
    let mut out = cell.clone();
    if beta == 0.0 {
        return Ok(out);
    }
    for s in &mut out.subunits {
        let (x, y) = s.offset();
        // cos(pi/2) is not exactly zero; treat sub-ulp offsets as on-axis
        let x = if x.abs() <= AXIS_EPS * s.rho.max(1.0) { 0.0 } else { x };
        let gamma = if x > 0.0 {
            beta / 2.0
        } else if x < 0.0 {
            -beta / 2.0
        } else {
            0.0
        };
        let xs = x + gamma;
        s.rho = xs.hypot(y);
        s.phi = wrap_angle(y.atan2(xs));
        s.sigma_prime = cell.blur.sigma_prime(s.sigma, s.rho);
    }
    Ok(out)
}

/// The beta-shifted set with every polarity inverted.
pub fn pull_set(cell: &CorfCell, beta: f64) -> Result<CorfCell> {
    let mut out = shift_set(cell, beta)?;
    for s in &mut out.subunits {
        s.delta = s.delta.flipped();
    }
    Ok(out)
}

/// Push, pull and combined maps of one push-pull evaluation.
#[derive(Clone, Debug)]
pub struct PushPullMaps {
    pub push: ResponseMap,
    pub pull: ResponseMap,
    /// `push - k * pull`, unrectified.
    pub signed: ResponseMap,
}

impl PushPullMaps {
    pub fn rectified(&self) -> ResponseMap {
        self.signed.rectified()
    }
}

pub(crate) fn combine(push: ResponseMap, pull: ResponseMap, k: f64) -> PushPullMaps {
    let data = push.data().iter().zip(pull.data()).map(|(p, q)| p - k * q).collect();
    let signed = ResponseMap::from_raw(push.width(), push.height(), data);
    PushPullMaps { push, pull, signed }
}

/// Evaluates push and pull on a shared evaluator.
pub fn pushpull_maps_with(eval: &mut CellEvaluator, cell: &PushPullCell) -> Result<PushPullMaps> {
    eval.prepare(&cell.push)?;
    eval.prepare(&cell.pull)?;
    let push = eval.response(&cell.push)?;
    let pull = eval.response(&cell.pull)?;
    Ok(combine(push, pull, cell.k))
}

pub fn pushpull_maps(image: &Image, cell: &PushPullCell) -> Result<PushPullMaps> {
    let mut eval = CellEvaluator::new(image, cell.push.source_sigma, cell.push.truncation)?;
    pushpull_maps_with(&mut eval, cell)
}

/// `max(0, r_push - k * r_pull)`; pass `rectify = false` for the signed map.
pub fn pushpull_response(image: &Image, cell: &PushPullCell, rectify: bool) -> Result<ResponseMap> {
    let maps = pushpull_maps(image, cell)?;
    Ok(if rectify { maps.rectified() } else { maps.signed })
}
