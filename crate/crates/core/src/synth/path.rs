use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest rotation between consecutive frames.
pub const MAX_STEP_ROTATION_DEG: f64 = 5.0;

/// Parametric camera trajectory over a seabed at `z = 0` (world z up).
///
/// Headings are measured from world +x towards +y; pitch is the downward
/// tilt of the optical axis below the horizon. Lengths are per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CameraPath {
    Static {
        position: [f64; 3],
        heading_deg: f64,
        pitch_deg: f64,
    },
    /// Constant world velocity with fixed orientation.
    Straight {
        start: [f64; 3],
        velocity: [f64; 3],
        heading_deg: f64,
        pitch_deg: f64,
    },
    /// Back-and-forth survey legs along x joined by half-circle turns,
    /// each leg shifted by one turn diameter along y.
    LawnMower {
        height: f64,
        pitch_deg: f64,
        speed: f64,
        leg_length: f64,
        turn_radius: f64,
    },
    /// Constant-rate turn starting at the origin heading along +x.
    Arc {
        height: f64,
        pitch_deg: f64,
        speed: f64,
        yaw_rate_deg: f64,
    },
}

/// Camera-to-world rotation for a camera with x right, y down, z forward.
pub fn camera_orientation(heading: f64, pitch: f64) -> UnitQuaternion<f64> {
    let forward = Vector3::new(
        heading.cos() * pitch.cos(),
        heading.sin() * pitch.cos(),
        -pitch.sin(),
    );
    let right = Vector3::new(heading.sin(), -heading.cos(), 0.0);
    let down = forward.cross(&right);
    let m = Matrix3::from_columns(&[right, down, forward]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

impl CameraPath {
    /// Camera-to-world pose `(R, p)` at frame `i`.
    pub fn pose(&self, i: usize) -> (UnitQuaternion<f64>, Vector3<f64>) {
        let f = i as f64;
        match *self {
            CameraPath::Static {
                position,
                heading_deg,
                pitch_deg,
            } => (
                camera_orientation(heading_deg.to_radians(), pitch_deg.to_radians()),
                Vector3::from(position),
            ),
            CameraPath::Straight {
                start,
                velocity,
                heading_deg,
                pitch_deg,
            } => (
                camera_orientation(heading_deg.to_radians(), pitch_deg.to_radians()),
                Vector3::from(start) + f * Vector3::from(velocity),
            ),
            CameraPath::LawnMower {
                height,
                pitch_deg,
                speed,
                leg_length,
                turn_radius,
            } => {
                let (x, y, heading) = lawn_mower(f * speed, leg_length, turn_radius);
                (
                    camera_orientation(heading, pitch_deg.to_radians()),
                    Vector3::new(x, y, height),
                )
            }
            CameraPath::Arc {
                height,
                pitch_deg,
                speed,
                yaw_rate_deg,
            } => {
                let w = yaw_rate_deg.to_radians();
                let heading = w * f;
                let (x, y) = if w == 0.0 {
                    (speed * f, 0.0)
                } else {
                    let r = speed / w;
                    (r * heading.sin(), r * (1.0 - heading.cos()))
                };
                (
                    camera_orientation(heading, pitch_deg.to_radians()),
                    Vector3::new(x, y, height),
                )
            }
        }
    }

    /// Checks the path parameters and that the camera stays above the
    /// seabed, looks down, and turns less than [`MAX_STEP_ROTATION_DEG`]
    /// per frame over `frames` frames.
    pub fn validate(&self, frames: usize) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match *self {
            CameraPath::Static {
                position,
                heading_deg,
                pitch_deg,
            } => finite(&position) && finite(&[heading_deg, pitch_deg]),
            CameraPath::Straight {
                start,
                velocity,
                heading_deg,
                pitch_deg,
            } => finite(&start) && finite(&velocity) && finite(&[heading_deg, pitch_deg]),
            CameraPath::LawnMower {
                height,
                pitch_deg,
                speed,
                leg_length,
                turn_radius,
            } => {
                finite(&[height, pitch_deg, speed, leg_length, turn_radius])
                    && speed >= 0.0
                    && leg_length > 0.0
                    && turn_radius > 0.0
            }
            CameraPath::Arc {
                height,
                pitch_deg,
                speed,
                yaw_rate_deg,
            } => finite(&[height, pitch_deg, speed, yaw_rate_deg]) && speed >= 0.0,
        };
        if !ok {
            return Err(Error::param(format!("invalid camera path parameters: {self:?}")));
        }
        let mut prev: Option<UnitQuaternion<f64>> = None;
        for i in 0..frames {
            let (r, p) = self.pose(i);
            if p.z <= 0.0 {
                return Err(Error::param(format!(
                    "camera at frame {i} is at height {} and crosses the seabed",
                    p.z
                )));
            }
            if let Some(q) = prev {
                let step = q.angle_to(&r).to_degrees();
                if step >= MAX_STEP_ROTATION_DEG {
                    return Err(Error::param(format!(
                        "camera turns {step:.2} deg between frames {} and {i} (limit {MAX_STEP_ROTATION_DEG})",
                        i - 1
                    )));
                }
            }
            prev = Some(r);
        }
        Ok(())
    }
}

/// Position and heading after travelling `s` metres along the survey
/// pattern.
fn lawn_mower(s: f64, leg: f64, r: f64) -> (f64, f64, f64) {
    let cycle = leg + PI * r;
    let k = (s / cycle).floor();
    let rem = s - k * cycle;
    let even = (k as i64) % 2 == 0;
    let y0 = k * 2.0 * r;
    if rem < leg {
        return if even { (rem, y0, 0.0) } else { (leg - rem, y0, PI) };
    }
    let a = (rem - leg) / r;
    if even {
        let phi = -FRAC_PI_2 + a;
        (leg + r * phi.cos(), y0 + r + r * phi.sin(), phi + FRAC_PI_2)
    } else {
        let phi = -FRAC_PI_2 - a;
        (r * phi.cos(), y0 + r + r * phi.sin(), phi - FRAC_PI_2)
    }
}
