use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::CameraPath;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::geometry::CameraIntrinsics;
use crate::grid::Plane;
use crate::imaging::{apply_degradation, HazeParams, Image, TransmissionMap};
use crate::trajectory::{Pose, Trajectory};

/// Sub-pixel offsets of the 2×2 supersampling pattern.
const SUBSAMPLES: [(f64, f64); 4] = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)];

/// Lattice stream of the boulder field, apart from the texture octaves.
const BOULDER_STREAM: u32 = 1000;

/// Boulder radius range as fractions of the lattice cell.
const BOULDER_RADIUS: (f64, f64) = (0.15, 0.35);

/// Depth of a boulder's centre below the seabed, as a fraction of its radius.
const BOULDER_BURIAL: f64 = 0.2;

/// Relative ray-parameter slack when testing whether a point is occluded.
const OCCLUSION_TOLERANCE: f64 = 1e-9;

/// Textured seabed at `z = 0` with optional partly buried spherical
/// boulders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub seed: u64,
    /// Mean seabed colour.
    pub albedo: [f64; 3],
    /// Texture modulation depth; 1 spans the full albedo range.
    pub contrast: f64,
    /// Lattice spacing of the coarsest noise octave, metres.
    pub feature_size: f64,
    pub octaves: u32,
    /// Probability that a boulder-lattice cell holds a boulder; 0 leaves the
    /// seabed flat.
    #[serde(default)]
    pub boulder_density: f64,
    /// Boulder lattice spacing, metres.
    #[serde(default = "default_boulder_cell")]
    pub boulder_cell: f64,
}

fn default_boulder_cell() -> f64 {
    1.0
}

struct Boulder {
    center: Vector3<f64>,
    radius: f64,
}

/// First intersection of a ray with the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Hit {
    /// Ray parameter.
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let albedo_ok = self.albedo.iter().all(|a| (0.0..=1.0).contains(a));
        if !albedo_ok
            || !(self.contrast >= 0.0 && self.contrast.is_finite())
            || !(self.feature_size > 0.0 && self.feature_size.is_finite())
            || self.octaves == 0
            || !(0.0..=1.0).contains(&self.boulder_density)
            || !(self.boulder_cell > 0.0 && self.boulder_cell.is_finite())
        {
            return Err(Error::param(format!("invalid scene: {self:?}")));
        }
        Ok(())
    }

    /// Radiance of the seabed texture at world `(x, y)`.
    pub fn radiance(&self, x: f64, y: f64) -> [f64; 3] {
        self.radiance_filtered(x, y, 0.0)
    }

    /// Radiance with the texture band-limited for a pixel footprint of
    /// `footprint` metres on the surface.
    pub fn radiance_filtered(&self, x: f64, y: f64, footprint: f64) -> [f64; 3] {
        let n = self.noise(x, y, footprint);
        let v = (0.5 + 2.0 * self.contrast * (n - 0.5)).clamp(0.0, 1.0);
        self.albedo.map(|a| a * v)
    }

    /// Highest point any boulder reaches above the seabed.
    pub fn max_height(&self) -> f64 {
        if self.boulder_density == 0.0 {
            0.0
        } else {
            (1.0 - BOULDER_BURIAL) * BOULDER_RADIUS.1 * self.boulder_cell
        }
    }

    fn boulder(&self, ix: i64, iy: i64) -> Option<Boulder> {
        let u = |k: u32| lattice(self.seed, BOULDER_STREAM + k, ix, iy);
        if !(u(0) < self.boulder_density) {
            return None;
        }
        let s = self.boulder_cell;
        let radius = s * (BOULDER_RADIUS.0 + (BOULDER_RADIUS.1 - BOULDER_RADIUS.0) * u(1));
        // Keep the sphere inside its cell column.
        let slack = 0.5 * s - radius;
        let center = Vector3::new(
            (ix as f64 + 0.5) * s + (2.0 * u(2) - 1.0) * slack,
            (iy as f64 + 0.5) * s + (2.0 * u(3) - 1.0) * slack,
            -BOULDER_BURIAL * radius,
        );
        Some(Boulder { center, radius })
    }

    /// First hit of `origin + t·ray` for `t > 0`. The origin must lie above
    /// [`Scene::max_height`].
    pub(crate) fn intersect(&self, origin: &Vector3<f64>, ray: &Vector3<f64>) -> Option<Hit> {
        if !(ray.z < 0.0) {
            return None;
        }
        let t_floor = origin.z / -ray.z;
        let floor = Hit {
            t: t_floor,
            point: origin + ray * t_floor,
            normal: Vector3::z(),
        };
        if self.boulder_density == 0.0 {
            return Some(floor);
        }
        let t_top = ((origin.z - self.max_height()) / -ray.z).max(0.0);
        // Walk the lattice cells under the ray from the boulder tops down to
        // the floor. Boulders never leave their cell, so the first hit in walk
        // order is the nearest.
        let s = self.boulder_cell;
        let p0 = origin + ray * t_top;
        let mut cell = [(p0.x / s).floor() as i64, (p0.y / s).floor() as i64];
        let mut step = [0i64; 2];
        let mut t_next = [f64::INFINITY; 2];
        let mut t_delta = [f64::INFINITY; 2];
        for a in 0..2 {
            if ray[a] != 0.0 {
                step[a] = if ray[a] > 0.0 { 1 } else { -1 };
                let edge = (cell[a] + i64::from(ray[a] > 0.0)) as f64 * s;
                t_next[a] = t_top + (edge - p0[a]) / ray[a];
                t_delta[a] = s / ray[a].abs();
            }
        }
        loop {
            if let Some(b) = self.boulder(cell[0], cell[1]) {
                // An entry beyond the floor hit lies below the seabed.
                if let Some(t) = sphere_entry(origin, ray, &b).filter(|&t| t <= t_floor) {
                    let point = origin + ray * t;
                    return Some(Hit {
                        t,
                        point,
                        normal: (point - b.center) / b.radius,
                    });
                }
            }
            let a = if t_next[0] < t_next[1] { 0 } else { 1 };
            if t_next[a] > t_floor {
                return Some(floor);
            }
            cell[a] += step[a];
            t_next[a] += t_delta[a];
        }
    }

    /// Texture times `0.55 + 0.45 n_z`, so the flat floor keeps the plain
    /// texture.
    fn shade(&self, hit: &Hit, footprint: f64) -> [f64; 3] {
        let light = 0.55 + 0.45 * hit.normal.z;
        self.radiance_filtered(hit.point.x, hit.point.y, footprint)
            .map(|c| c * light)
    }
}

impl Scene {
    /// Fractal value noise in `[0, 1]`. Octaves whose cell is under two
    /// footprints fade to their mean, reaching it at one footprint.
    fn noise(&self, x: f64, y: f64, footprint: f64) -> f64 {
        let mut total = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut cell = self.feature_size;
        for octave in 0..self.octaves {
            let keep = if footprint > 0.0 {
                (cell / footprint - 1.0).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let value = if keep > 0.0 {
                value_noise(self.seed, octave, x / cell, y / cell)
            } else {
                0.5
            };
            total += amp * (0.5 + keep * (value - 0.5));
            norm += amp;
            amp *= 0.5;
            cell *= 0.5;
        }
        total / norm
    }
}

fn sphere_entry(origin: &Vector3<f64>, ray: &Vector3<f64>, b: &Boulder) -> Option<f64> {
    let oc = origin - b.center;
    let a = ray.norm_squared();
    let half_b = ray.dot(&oc);
    let c = oc.norm_squared() - b.radius * b.radius;
    let disc = half_b * half_b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-half_b - disc.sqrt()) / a;
    (t > 0.0).then_some(t)
}

fn lattice(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    // splitmix64 finalizer over the packed lattice coordinates.
    let mut z = seed
        ^ (octave as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, octave: u32, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (fx, fy) = (smooth(x - x0), smooth(y - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v00 = lattice(seed, octave, ix, iy);
    let v10 = lattice(seed, octave, ix + 1, iy);
    let v01 = lattice(seed, octave, ix, iy + 1);
    let v11 = lattice(seed, octave, ix + 1, iy + 1);
    let top = v00 + (v10 - v00) * fx;
    let bottom = v01 + (v11 - v01) * fx;
    top + (bottom - top) * fy
}

/// Frame rendered from one pose: clean radiance and per-pixel z-depth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub radiance: Image,
    pub depth: Plane,
}

/// Scene hit through pixel `(px, py)`. The unprojected ray has unit
/// camera-z, so the hit parameter is the z-depth.
/// Most oblique incidence (cosine) used for the texture footprint.
const MIN_INCIDENCE: f64 = 0.05;

/// First hit of the ray through pixel `(px, py)` and the width of one pixel
/// on the surface there.
fn cast(
    scene: &Scene,
    k: &CameraIntrinsics,
    r: &UnitQuaternion<f64>,
    position: &Vector3<f64>,
    px: f64,
    py: f64,
) -> Option<(Hit, f64)> {
    let ray = r * k.unproject(Vector2::new(px, py));
    let hit = scene.intersect(position, &ray)?;
    let len = ray.norm();
    let cos = (ray.dot(&hit.normal) / len).abs().max(MIN_INCIDENCE);
    let footprint = hit.t * len / k.fx().min(k.fy()) / cos;
    Some((hit, footprint))
}

/// Renders one view of the seabed with 2×2 supersampling.
pub fn render_frame(
    scene: &Scene,
    rotation: &UnitQuaternion<f64>,
    position: &Vector3<f64>,
    k: &CameraIntrinsics,
    width: usize,
    height: usize,
) -> Result<RenderedFrame> {
    if position.z <= scene.max_height() {
        return Err(Error::param(format!(
            "camera height {} is not above the seabed and its boulders ({} m)",
            position.z,
            scene.max_height()
        )));
    }
    let mut pixels = vec![([0.0; 3], 0.0); width * height];
    pixels.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let (px, py) = (x as f64, y as f64);
            let Some((center, center_fp)) = cast(scene, k, rotation, position, px, py) else {
                *out = ([f64::NAN; 3], f64::NAN);
                continue;
            };
            let mut acc = [0.0; 3];
            for (dx, dy) in SUBSAMPLES {
                let (hit, fp) =
                    cast(scene, k, rotation, position, px + dx, py + dy).unwrap_or((center, center_fp));
                let c = scene.shade(&hit, fp);
                for i in 0..3 {
                    acc[i] += 0.25 * c[i];
                }
            }
            *out = (acc, center.t);
        }
    });
    if pixels.iter().any(|(_, d)| d.is_nan()) {
        return Err(Error::param(
            "part of the view does not see the seabed; increase the pitch",
        ));
    }
    let radiance = Image::from_fn(width, height, |x, y| pixels[y * width + x].0)?;
    let depth = Plane::from_fn(width, height, |x, y| pixels[y * width + x].1);
    Ok(RenderedFrame { radiance, depth })
}

/// Clean frames, depths and the ground-truth trajectory (timestamps
/// `i / fps`) for `frames` poses along `path`.
pub fn render_sequence(
    scene: &Scene,
    path: &CameraPath,
    k: &CameraIntrinsics,
    (width, height): (usize, usize),
    frames: usize,
    fps: f64,
) -> Result<(Vec<RenderedFrame>, Trajectory)> {
    scene.validate()?;
    path.validate(frames)?;
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::param(format!("fps must be > 0, got {fps}")));
    }
    let mut rendered = Vec::with_capacity(frames);
    let mut poses = Vec::with_capacity(frames);
    for i in 0..frames {
        let (r, p) = path.pose(i);
        rendered.push(render_frame(scene, &r, &p, k, width, height)?);
        poses.push(Pose::new(i as f64 / fps, r, p)?);
    }
    Ok((rendered, Trajectory::new(poses)?))
}

/// Reprojection flow from frame `a` to frame `b` with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFlow {
    pub flow: FlowField,
    /// False where the point is behind camera `b`, leaves its image, or is
    /// hidden from `b` by a boulder.
    pub valid: Vec<bool>,
}

/// Back-projects every pixel of `a` with its depth, moves it into camera
/// `b`, and projects it. Invalid pixels carry zero flow.
pub fn ground_truth_flow(
    scene: &Scene,
    pose_a: &Pose,
    pose_b: &Pose,
    depth_a: &Plane,
    k: &CameraIntrinsics,
) -> Result<GroundTruthFlow> {
    let (w, h) = depth_a.dims();
    let rel = pose_a.relative_to(pose_b);
    let to_b = rel.inverse();
    let mut u = vec![0.0; w * h];
    let mut v = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = depth_a.get(x, y);
            if !(d > 0.0 && d.is_finite()) {
                continue;
            }
            let xa = k.unproject(Vector2::new(x as f64, y as f64)) * d;
            let xb = to_b * nalgebra::Point3::from(xa);
            if xb.z <= 0.0 {
                continue;
            }
            let pb = k.project(xb.coords);
            let (du, dv) = (pb.x - x as f64, pb.y - y as f64);
            if !(0.0..=(w - 1) as f64).contains(&pb.x) || !(0.0..=(h - 1) as f64).contains(&pb.y) {
                continue;
            }
            // Visible from b only if nothing is hit before the point.
            let world = pose_a.isometry() * nalgebra::Point3::from(xa);
            let origin = pose_b.position();
            let blocked = scene
                .intersect(&origin, &(world.coords - origin))
                .is_some_and(|hit| hit.t < 1.0 - OCCLUSION_TOLERANCE);
            if blocked {
                continue;
            }
            u[i] = du;
            v[i] = dv;
            valid[i] = true;
        }
    }
    Ok(GroundTruthFlow {
        flow: FlowField::new(Plane::new(w, h, u), Plane::new(w, h, v))?,
        valid,
    })
}

/// Applies the haze model with per-channel `t_c = exp(-β_c d)`. Returns the
/// observed frames and the channel-mean transmission of each frame.
pub fn degrade_sequence(
    frames: &[Image],
    depths: &[Plane],
    haze: &HazeParams,
) -> Result<(Vec<Image>, Vec<TransmissionMap>)> {
    if frames.len() != depths.len() {
        return Err(Error::param(format!(
            "{} frames but {} depth maps",
            frames.len(),
            depths.len()
        )));
    }
    frames
        .iter()
        .zip(depths)
        .map(|(frame, depth)| {
            if let Some(d) = depth.data().iter().find(|d| !(**d > 0.0)) {
                return Err(Error::param(format!("depth {d} must be positive")));
            }
            let beta = haze.attenuation();
            let t: [TransmissionMap; 3] = [
                TransmissionMap::from_depth(depth, beta[0])?,
                TransmissionMap::from_depth(depth, beta[1])?,
                TransmissionMap::from_depth(depth, beta[2])?,
            ];
            let observed = apply_degradation(frame, &t, haze.ambient())?;
            let mean = Plane::from_fn(depth.width(), depth.height(), |x, y| {
                (t[0].plane().get(x, y) + t[1].plane().get(x, y) + t[2].plane().get(x, y)) / 3.0
            });
            Ok((observed, TransmissionMap::clamped(mean)?))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}
