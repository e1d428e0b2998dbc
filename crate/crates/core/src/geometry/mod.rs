//! Two-view geometry: correspondences from flow, weighted essential matrix
//! estimation and relative pose recovery.
//!
//! Motion convention: a [`RelativeMotion`] is the pose of the second camera
//! expressed in the first camera's frame, so a point satisfies
//! `X_a = R X_b + t`. Image points obey `x̂_bᵀ E x̂_a = 0` with
//! `E = [-Rᵀt]× Rᵀ`.

mod correspondences;
mod decompose;
mod essential;

pub use correspondences::flow_to_correspondences;
pub use decompose::decompose_essential;
pub use essential::{estimate_essential, sampson_distance, EssentialEstimate, RansacParams};

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels, no distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics", into = "RawIntrinsics")]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::param(format!(
                "focal lengths must be > 0, got ({fx}, {fy})"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::param("principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Fails unless the principal point lies inside a `width`×`height` image.
    pub fn check_image(&self, width: usize, height: usize) -> Result<()> {
        if !(0.0..width as f64).contains(&self.cx) || !(0.0..height as f64).contains(&self.cy) {
            return Err(Error::param(format!(
                "principal point ({}, {}) outside {width}x{height} image",
                self.cx, self.cy
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn fx(&self) -> f64 {
        self.fx
    }
    #[inline]
    pub fn fy(&self) -> f64 {
        self.fy
    }
    #[inline]
    pub fn cx(&self) -> f64 {
        self.cx
    }
    #[inline]
    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Pixel to normalized homogeneous ray `K⁻¹ [x, y, 1]ᵀ`.
    #[inline]
    pub fn unproject(&self, p: Vector2<f64>) -> Vector3<f64> {
        Vector3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }

    /// Camera-frame point to pixel.
    #[inline]
    pub fn project(&self, x: Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy)
    }
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = Error;
    fn try_from(r: RawIntrinsics) -> Result<Self> {
        Self::new(r.fx, r.fy, r.cx, r.cy)
    }
}

impl From<CameraIntrinsics> for RawIntrinsics {
    fn from(k: CameraIntrinsics) -> Self {
        RawIntrinsics {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Pixel in the first frame.
    pub x1: Vector2<f64>,
    /// Matching pixel in the second frame.
    pub x2: Vector2<f64>,
    /// Confidence, strictly positive.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    items: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(items: Vec<Correspondence>) -> Result<Self> {
        if let Some(c) = items.iter().find(|c| !(c.weight.is_finite() && c.weight > 0.0)) {
            return Err(Error::param(format!(
                "correspondence weight {} must be > 0",
                c.weight
            )));
        }
        Ok(Self { items })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.items.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[inline]
    pub fn items(&self) -> &[Correspondence] {
        &self.items
    }

    /// The entries whose `mask` flag is set.
    pub fn select(&self, mask: &[bool]) -> CorrespondenceSet {
        CorrespondenceSet {
            items: self
                .items
                .iter()
                .zip(mask)
                .filter(|(_, &keep)| keep)
                .map(|(c, _)| *c)
                .collect(),
        }
    }

    /// Swaps the roles of the two frames.
    pub fn reversed(&self) -> CorrespondenceSet {
        CorrespondenceSet {
            items: self
                .items
                .iter()
                .map(|c| Correspondence {
                    x1: c.x2,
                    x2: c.x1,
                    weight: c.weight,
                })
                .collect(),
        }
    }

    /// Multiplies every weight by `factor` (> 0).
    pub fn scaled_weights(&self, factor: f64) -> CorrespondenceSet {
        CorrespondenceSet {
            items: self
                .items
                .iter()
                .map(|c| Correspondence {
                    weight: c.weight * factor,
                    ..*c
                })
                .collect(),
        }
    }
}

/// Pose of the second camera in the first camera's frame; translation is a
/// unit direction (monocular scale is unobservable).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeMotion {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl RelativeMotion {
    /// Normalizes `translation` to unit length; a zero vector is rejected.
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Result<Self> {
        let n = translation.norm();
        if !(n > 1e-12 && n.is_finite()) {
            return Err(Error::DegenerateGeometry(
                "relative motion needs a non-zero translation direction".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation: translation / n,
        })
    }

    /// No rotation and no translation; stands in for frame pairs whose
    /// geometry could not be recovered.
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    #[inline]
    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    /// Motion from the second camera back to the first.
    pub fn inverse(&self) -> RelativeMotion {
        let r_inv = self.rotation.inverse();
        RelativeMotion {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    /// Essential matrix `E` with `x̂_bᵀ E x̂_a = 0`.
    pub fn essential(&self) -> Matrix3<f64> {
        let r_ba = self.rotation.inverse().to_rotation_matrix().into_inner();
        let t_ba = -(r_ba * self.translation);
        t_ba.cross_matrix() * r_ba
    }
}

/// How flow weights reach the pose solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseBackendMode {
    /// Correspondences come from the weighted flow `x2 = x1 + w·F`, each with
    /// unit confidence.
    #[serde(rename = "scaled")]
    ScaledFlow,
    /// Correspondences come from the raw flow and carry the weight as a
    /// least-squares and consensus confidence.
    #[default]
    #[serde(rename = "confidence")]
    ConfidenceWeighted,
}

impl std::str::FromStr for PoseBackendMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled" => Ok(Self::ScaledFlow),
            "confidence" => Ok(Self::ConfidenceWeighted),
            other => Err(Error::param(format!(
                "unknown mode {other:?}, expected \"scaled\" or \"confidence\""
            ))),
        }
    }
}

/// Geodesic angle (radians) between two rotations.
pub fn rotation_angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b)
}

/// Angle (radians) between two non-zero vectors.
pub fn direction_angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos()
}

/// Noiseless two-view scenes for solver tests.
#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(300.0, 300.0, 160.0, 120.0).unwrap()
    }

    /// Random motion with rotation up to ~8° and a unit translation.
    pub fn random_motion(rng: &mut ChaCha8Rng) -> RelativeMotion {
        let rot = UnitQuaternion::from_euler_angles(
            rng.random_range(-0.08..0.08),
            rng.random_range(-0.08..0.08),
            rng.random_range(-0.08..0.08),
        );
        let t = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        RelativeMotion::new(rot, t).unwrap()
    }

    /// Projects random points at depth 4..12 (first camera) through both
    /// cameras, with the second camera displaced by `baseline · t`. Points
    /// outside either 320×240 image or behind either camera are skipped.
    pub fn scene(seed: u64, motion: &RelativeMotion, baseline: f64, n: usize) -> CorrespondenceSet {
        let k = intrinsics();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r_ab = motion.rotation();
        let t_ab = motion.translation() * baseline;
        let mut items = Vec::new();
        while items.len() < n {
            let px = Vector2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
            let xa = k.unproject(px) * rng.random_range(4.0..12.0);
            let xb = r_ab.inverse() * (xa - t_ab);
            if xb.z <= 0.1 {
                continue;
            }
            let pb = k.project(xb);
            if !(0.0..320.0).contains(&pb.x) || !(0.0..240.0).contains(&pb.y) {
                continue;
            }
            items.push(Correspondence {
                x1: px,
                x2: pb,
                weight: rng.random_range(0.5..2.0),
            });
        }
        CorrespondenceSet::new(items).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn essential_matches_scene_constraint() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let m = testutil::random_motion(&mut rng);
        let e = m.essential();
        let k = testutil::intrinsics();
        for c in testutil::scene(4, &m, 0.5, 50).items() {
            let r = k.unproject(c.x2).dot(&(e * k.unproject(c.x1)));
            assert!(r.abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn intrinsics_roundtrip_and_validation() {
        let k = CameraIntrinsics::new(300.0, 310.0, 160.0, 120.0).unwrap();
        let p = Vector2::new(17.5, 201.0);
        let r = k.unproject(p);
        assert!((k.project(r * 3.7) - p).norm() < 1e-12);
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(k.check_image(320, 240).is_ok());
        assert!(k.check_image(100, 100).is_err());
    }

    #[test]
    fn essential_of_pure_x_translation() {
        let m = RelativeMotion::new(UnitQuaternion::identity(), Vector3::x()).unwrap();
        let e = m.essential();
        let skew = Vector3::x().cross_matrix();
        assert!((e + skew).norm() < 1e-15 || (e - skew).norm() < 1e-15);
    }

    #[test]
    fn inverse_inverts() {
        let m = RelativeMotion::new(
            UnitQuaternion::from_euler_angles(0.1, -0.2, 0.3),
            Vector3::new(0.3, -1.0, 2.0),
        )
        .unwrap();
        let back = m.inverse().inverse();
        assert!(back.rotation().angle_to(&m.rotation()) < 1e-12);
        assert!((back.translation() - m.translation()).norm() < 1e-12);
    }

    #[test]
    fn zero_translation_rejected() {
        assert!(RelativeMotion::new(UnitQuaternion::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "scaled".parse::<PoseBackendMode>().unwrap(),
            PoseBackendMode::ScaledFlow
        );
        assert!("bogus".parse::<PoseBackendMode>().is_err());
        assert_eq!(PoseBackendMode::default(), PoseBackendMode::ConfidenceWeighted);
    }
}
