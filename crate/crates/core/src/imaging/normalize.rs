use serde::{Deserialize, Serialize};

use super::{InverseTransmission, TransmissionMap};
use crate::error::{Error, Result};
use crate::grid::Plane;

/// Spread (`alpha`) and bias (`beta_bias`) of the transmission-to-weight
/// mapping.
///
/// The offset is `sigma = max(alpha * t) / beta_bias`; since `t <= 1`,
/// requiring `alpha / beta_bias < 1` guarantees `sigma < 1` for every map and
/// therefore strictly positive weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct NormalizationParams {
    alpha: f64,
    beta_bias: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    alpha: f64,
    beta_bias: f64,
}

impl NormalizationParams {
    pub fn new(alpha: f64, beta_bias: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::param(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        if !(beta_bias.is_finite() && beta_bias > 0.0) {
            return Err(Error::param(format!(
                "beta_bias must be finite and > 0, got {beta_bias}"
            )));
        }
        if alpha / beta_bias >= 1.0 {
            return Err(Error::param(format!(
                "alpha / beta_bias = {} >= 1 would allow non-positive flow weights",
                alpha / beta_bias
            )));
        }
        Ok(Self { alpha, beta_bias })
    }

    /// `alpha = 0`: every weight is exactly one.
    pub fn disabled() -> Self {
        Self {
            alpha: 0.0,
            beta_bias: 1.0,
        }
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn beta_bias(&self) -> f64 {
        self.beta_bias
    }
}

impl Default for NormalizationParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            beta_bias: 4.0,
        }
    }
}

impl TryFrom<RawParams> for NormalizationParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        Self::new(r.alpha, r.beta_bias)
    }
}

impl From<NormalizationParams> for RawParams {
    fn from(p: NormalizationParams) -> Self {
        RawParams {
            alpha: p.alpha,
            beta_bias: p.beta_bias,
        }
    }
}

/// Per-pixel flow weights, strictly positive, together with the offset and
/// bounds they were produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    weights: Plane,
    sigma: f64,
    lower: f64,
    upper: f64,
}

impl WeightMap {
    /// All weights equal to one.
    pub fn uniform(width: usize, height: usize) -> Self {
        Self {
            weights: Plane::filled(width, height, 1.0),
            sigma: 0.0,
            lower: 1.0,
            upper: 1.0,
        }
    }

    /// Wraps arbitrary positive weights.
    pub fn from_plane(weights: Plane) -> Result<Self> {
        if weights.data().iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::param("weights must be finite and > 0"));
        }
        let (lower, upper) = weights.min_max();
        Ok(Self {
            weights,
            sigma: 0.0,
            lower,
            upper,
        })
    }

    #[inline]
    pub fn plane(&self) -> &Plane {
        &self.weights
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.weights.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights.get(x, y)
    }

    /// Offset `sigma` used when the map was normalized.
    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Guaranteed range `[1 - sigma, alpha * max(t) + 1 - sigma]`.
    #[inline]
    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }
}

/// Element-wise `1 / t`.
pub fn invert(t: &TransmissionMap) -> InverseTransmission {
    InverseTransmission::new(t.plane().map(|v| 1.0 / v)).expect("t in [eps, 1] inverts into [1, 1/eps]")
}

/// Maps inverse transmission to flow weights:
/// `T_norm = alpha / T_inv + 1 - sigma` with `sigma = max(alpha / T_inv) / beta_bias`.
pub fn normalize_transmission(t_inv: &InverseTransmission, params: NormalizationParams) -> Result<WeightMap> {
    let alpha = params.alpha();
    let t = t_inv.plane().map(|v| 1.0 / v);
    let (_, t_max) = t.min_max();
    let sigma = (alpha * t_max) / params.beta_bias();
    if !(sigma < 1.0) {
        return Err(Error::param(format!(
            "normalization offset sigma = {sigma} >= 1 gives non-positive weights"
        )));
    }
    let offset = 1.0 - sigma;
    let weights = t.map(|v| alpha * v + offset);
    Ok(WeightMap {
        weights,
        sigma,
        lower: offset,
        upper: alpha * t_max + offset,
    })
}
