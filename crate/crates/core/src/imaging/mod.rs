//! Underwater image formation, classical ambient/transmission estimation,
//! and transmission normalization into flow weights.

mod dark_channel;
mod model;
mod normalize;

pub use dark_channel::{estimate_ambient, estimate_transmission, AMBIENT_PATCH, HAZE_RETENTION};
pub use model::{apply_degradation, restore_radiance, ChannelTransmission};
pub use normalize::{invert, normalize_transmission, NormalizationParams, WeightMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Plane;

/// Lower clamp for transmission values; keeps `1/t` bounded.
pub const EPSILON_T: f64 = 1e-3;

/// Smallest accepted image side.
pub const MIN_IMAGE_SIDE: usize = 8;

/// Planar RGB radiance image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: [Plane; 3],
}

impl Image {
    /// Builds an image from three planes, rejecting non-finite or
    /// out-of-range values.
    pub fn from_planes(r: Plane, g: Plane, b: Plane) -> Result<Self> {
        let dims = r.dims();
        crate::error::check_shape(dims, g.dims())?;
        crate::error::check_shape(dims, b.dims())?;
        check_min_side(dims)?;
        for p in [&r, &g, &b] {
            if let Some(v) = p.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::param(format!("image value {v} outside [0, 1]")));
            }
        }
        Ok(Self { channels: [r, g, b] })
    }

    /// Builds an image, clamping every value into `[0, 1]`. Non-finite
    /// values are rejected.
    pub fn from_planes_clamped(r: Plane, g: Plane, b: Plane) -> Result<Self> {
        let clamp = |p: Plane| -> Result<Plane> {
            if p.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::param("non-finite image value"));
            }
            Ok(p.map(|v| v.clamp(0.0, 1.0)))
        };
        Self::from_planes(clamp(r)?, clamp(g)?, clamp(b)?)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = [
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
        ];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    data[c].push(px[c]);
                }
            }
        }
        let [r, g, b] = data;
        Self::from_planes_clamped(
            Plane::new(width, height, r),
            Plane::new(width, height, g),
            Plane::new(width, height, b),
        )
    }

    pub fn uniform(width: usize, height: usize, color: [f64; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| color)
    }

    /// A gray image with the same plane in every channel.
    pub fn from_gray(plane: Plane) -> Result<Self> {
        Self::from_planes_clamped(plane.clone(), plane.clone(), plane)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &Plane {
        &self.channels[c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        [
            self.channels[0].get(x, y),
            self.channels[1].get(x, y),
            self.channels[2].get(x, y),
        ]
    }

    /// Rec.601 luma, `Y = 0.299 R + 0.587 G + 0.114 B`.
    pub fn luminance(&self) -> Plane {
        let [r, g, b] = &self.channels;
        let data = r
            .data()
            .iter()
            .zip(g.data())
            .zip(b.data())
            .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect();
        Plane::new(self.width(), self.height(), data)
    }

    /// Rounds every value to the nearest multiple of 1/255, as an 8-bit
    /// save/load cycle would.
    pub fn quantized(&self) -> Image {
        let q = |p: &Plane| p.map(|v| (v * 255.0).round() / 255.0);
        Image {
            channels: [q(&self.channels[0]), q(&self.channels[1]), q(&self.channels[2])],
        }
    }
}

fn check_min_side((w, h): (usize, usize)) -> Result<()> {
    if w < MIN_IMAGE_SIDE || h < MIN_IMAGE_SIDE {
        return Err(Error::param(format!(
            "image is {w}x{h}, both sides must be at least {MIN_IMAGE_SIDE}"
        )));
    }
    Ok(())
}

/// Medium transmission `t(x)`, clamped to `[EPSILON_T, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap(Plane);

impl TransmissionMap {
    /// Wraps a plane whose values must already lie in `[EPSILON_T, 1]`.
    pub fn new(plane: Plane) -> Result<Self> {
        if let Some(v) = plane.data().iter().find(|v| !(EPSILON_T..=1.0).contains(*v)) {
            return Err(Error::param(format!("transmission {v} outside [{EPSILON_T}, 1]")));
        }
        Ok(Self(plane))
    }

    /// Wraps a plane after clamping into `[EPSILON_T, 1]`; NaN is rejected.
    pub fn clamped(plane: Plane) -> Result<Self> {
        if plane.data().iter().any(|v| v.is_nan()) {
            return Err(Error::param("NaN transmission"));
        }
        Self::new(plane.map(|v| v.clamp(EPSILON_T, 1.0)))
    }

    pub fn uniform(width: usize, height: usize, t: f64) -> Result<Self> {
        Self::new(Plane::filled(width, height, t))
    }

    /// `t = exp(-attenuation * depth)` per pixel.
    pub fn from_depth(depth: &Plane, attenuation: f64) -> Result<Self> {
        if !(attenuation >= 0.0 && attenuation.is_finite()) {
            return Err(Error::param(format!("attenuation {attenuation} must be >= 0")));
        }
        Self::clamped(depth.map(|d| (-attenuation * d).exp()))
    }

    #[inline]
    pub fn plane(&self) -> &Plane {
        &self.0
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }
}

/// Element-wise inverse transmission `1/t(x)`, values in `[1, 1/EPSILON_T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseTransmission(Plane);

impl InverseTransmission {
    pub fn new(plane: Plane) -> Result<Self> {
        let hi = 1.0 / EPSILON_T;
        if let Some(v) = plane.data().iter().find(|v| !(1.0..=hi).contains(*v)) {
            return Err(Error::param(format!(
                "inverse transmission {v} outside [1, {hi}]"
            )));
        }
        Ok(Self(plane))
    }

    #[inline]
    pub fn plane(&self) -> &Plane {
        &self.0
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
}

/// Per-channel ambient (veiling) light `A_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct AmbientLight([f64; 3]);

impl AmbientLight {
    pub fn new(rgb: [f64; 3]) -> Result<Self> {
        if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param(format!("ambient light {rgb:?} outside [0, 1]")));
        }
        Ok(Self(rgb))
    }

    #[inline]
    pub fn rgb(&self) -> [f64; 3] {
        self.0
    }

    #[inline]
    pub fn channel(&self, c: usize) -> f64 {
        self.0[c]
    }
}

impl TryFrom<[f64; 3]> for AmbientLight {
    type Error = Error;
    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AmbientLight> for [f64; 3] {
    fn from(a: AmbientLight) -> Self {
        a.0
    }
}

/// Medium parameters: per-channel attenuation (1/m) and ambient light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHaze", into = "RawHaze")]
pub struct HazeParams {
    attenuation: [f64; 3],
    ambient: AmbientLight,
}

#[derive(Serialize, Deserialize)]
struct RawHaze {
    attenuation: [f64; 3],
    ambient: AmbientLight,
}

impl HazeParams {
    /// Zero attenuation is accepted and means a clear medium.
    pub fn new(attenuation: [f64; 3], ambient: AmbientLight) -> Result<Self> {
        if attenuation.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::param(format!(
                "attenuation {attenuation:?} must be finite and >= 0"
            )));
        }
        Ok(Self { attenuation, ambient })
    }

    #[inline]
    pub fn attenuation(&self) -> [f64; 3] {
        self.attenuation
    }

    #[inline]
    pub fn ambient(&self) -> AmbientLight {
        self.ambient
    }
}

impl TryFrom<RawHaze> for HazeParams {
    type Error = Error;
    fn try_from(r: RawHaze) -> Result<Self> {
        Self::new(r.attenuation, r.ambient)
    }
}

impl From<HazeParams> for RawHaze {
    fn from(h: HazeParams) -> Self {
        RawHaze {
            attenuation: h.attenuation,
            ambient: h.ambient,
        }
    }
}
