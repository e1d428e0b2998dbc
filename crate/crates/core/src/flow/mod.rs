//! Dense optical flow and its attenuation-aware weighting.

mod colorwheel;
mod lucas_kanade;

pub use colorwheel::flow_to_color;
pub use lucas_kanade::{estimate_flow, estimate_flow_luma};

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::grid::Plane;
use crate::imaging::{Image, WeightMap};

/// Per-pixel displacement `(u, v)` in pixels; `u` along columns (right),
/// `v` along rows (down).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    u: Plane,
    v: Plane,
}

impl FlowField {
    pub fn new(u: Plane, v: Plane) -> Result<Self> {
        check_shape(u.dims(), v.dims())?;
        let (w, h) = (u.width() as f64, u.height() as f64);
        if u.data().iter().any(|x| !x.is_finite() || x.abs() > w)
            || v.data().iter().any(|x| !x.is_finite() || x.abs() > h)
        {
            return Err(Error::param(
                "flow components must be finite and bounded by the image size",
            ));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            u: Plane::filled(width, height, 0.0),
            v: Plane::filled(width, height, 0.0),
        }
    }

    /// Constant displacement everywhere.
    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Result<Self> {
        Self::new(Plane::filled(width, height, u), Plane::filled(width, height, v))
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.u.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.u.height()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        (self.u.get(x, y), self.v.get(x, y))
    }

    #[inline]
    pub fn u(&self) -> &Plane {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &Plane {
        &self.v
    }

    pub fn magnitude(&self) -> Plane {
        let data = self
            .u
            .data()
            .iter()
            .zip(self.v.data())
            .map(|(u, v)| u.hypot(*v))
            .collect();
        Plane::new(self.width(), self.height(), data)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &FlowField, b: f64) -> Result<FlowField> {
        check_shape(self.dims(), other.dims())?;
        let mix = |p: &Plane, q: &Plane| {
            let data = p
                .data()
                .iter()
                .zip(q.data())
                .map(|(x, y)| a * x + b * y)
                .collect();
            Plane::new(p.width(), p.height(), data)
        };
        FlowField::new(mix(&self.u, &other.u), mix(&self.v, &other.v))
    }
}

/// Pyramid depth, per-level iteration count and aggregation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFlowParams", into = "RawFlowParams")]
pub struct FlowParams {
    pyramid_levels: usize,
    iterations_per_level: usize,
    window: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlowParams {
    #[serde(default = "default_levels")]
    pyramid_levels: usize,
    #[serde(default = "default_iterations")]
    iterations_per_level: usize,
    #[serde(default = "default_window")]
    window: usize,
}

fn default_levels() -> usize {
    4
}
fn default_iterations() -> usize {
    10
}
fn default_window() -> usize {
    15
}

impl FlowParams {
    pub fn new(pyramid_levels: usize, iterations_per_level: usize, window: usize) -> Result<Self> {
        if pyramid_levels < 1 || pyramid_levels > 12 {
            return Err(Error::param(format!(
                "pyramid_levels must be in 1..=12, got {pyramid_levels}"
            )));
        }
        if iterations_per_level < 1 {
            return Err(Error::param("iterations_per_level must be >= 1"));
        }
        if window < 5 || window % 2 == 0 {
            return Err(Error::param(format!("window must be odd and >= 5, got {window}")));
        }
        Ok(Self {
            pyramid_levels,
            iterations_per_level,
            window,
        })
    }

    #[inline]
    pub fn pyramid_levels(&self) -> usize {
        self.pyramid_levels
    }

    #[inline]
    pub fn iterations_per_level(&self) -> usize {
        self.iterations_per_level
    }

    #[inline]
    pub fn window(&self) -> usize {
        self.window
    }

    /// Smallest image side the pyramid can handle.
    pub fn min_image_side(&self) -> usize {
        (1 << (self.pyramid_levels - 1)) * self.window
    }
}

impl Default for FlowParams {
    fn default() -> Self {
        Self::new(default_levels(), default_iterations(), default_window()).unwrap()
    }
}

impl TryFrom<RawFlowParams> for FlowParams {
    type Error = Error;
    fn try_from(r: RawFlowParams) -> Result<Self> {
        Self::new(r.pyramid_levels, r.iterations_per_level, r.window)
    }
}

impl From<FlowParams> for RawFlowParams {
    fn from(p: FlowParams) -> Self {
        RawFlowParams {
            pyramid_levels: p.pyramid_levels,
            iterations_per_level: p.iterations_per_level,
            window: p.window,
        }
    }
}

/// Hadamard product of the flow with a weight map: both components of each
/// vector are scaled by that pixel's weight.
pub fn weight_flow(flow: &FlowField, weights: &WeightMap) -> Result<FlowField> {
    check_shape(flow.dims(), weights.dims())?;
    let scale = |p: &Plane| {
        let data = p
            .data()
            .iter()
            .zip(weights.plane().data())
            .map(|(f, w)| f * w)
            .collect();
        Plane::new(p.width(), p.height(), data)
    };
    // Weights above one can push a vector past the size bound; clamp to it.
    let (w, h) = (flow.width() as f64, flow.height() as f64);
    let u = scale(&flow.u).map(|x| x.clamp(-w, w));
    let v = scale(&flow.v).map(|x| x.clamp(-h, h));
    Ok(FlowField { u, v })
}

/// Backward bilinear warp: `out(x) = frame(x + flow(x))`, border-clamped.
pub fn warp_image(frame: &Image, flow: &FlowField) -> Result<Image> {
    check_shape(frame.dims(), flow.dims())?;
    let (w, h) = frame.dims();
    let planes: [Plane; 3] = std::array::from_fn(|c| {
        let src = frame.channel(c);
        Plane::from_fn(w, h, |x, y| {
            let (u, v) = flow.at(x, y);
            src.sample_bilinear(x as f64 + u, y as f64 + v)
        })
    });
    let [r, g, b] = planes;
    Image::from_planes_clamped(r, g, b)
}

/// Mean endpoint error over the pixels selected by `mask` (all pixels when
/// `None`).
pub fn flow_epe(estimate: &FlowField, truth: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    check_shape(truth.dims(), estimate.dims())?;
    let n = estimate.width() * estimate.height();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::param(format!(
                "mask has {} entries, expected {n}",
                m.len()
            )));
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let du = estimate.u.data()[i] - truth.u.data()[i];
        let dv = estimate.v.data()[i] - truth.v.data()[i];
        sum += du.hypot(dv);
        count += 1;
    }
    if count == 0 {
        return Err(Error::param("flow_epe mask selects no pixels"));
    }
    Ok(sum / count as f64)
}

/// Mask selecting pixels at least `margin` away from every border.
pub fn interior_mask(width: usize, height: usize, margin: usize) -> Vec<bool> {
    let mut m = vec![false; width * height];
    for y in margin..height.saturating_sub(margin) {
        for x in margin..width.saturating_sub(margin) {
            m[y * width + x] = true;
        }
    }
    m
}
