//! Absolute trajectories: chaining relative motions, alignment, and the
//! ATE / RTE / length metrics.

mod align;
mod metrics;
mod tum;

pub use align::{
    associate, umeyama_align, umeyama_points, AlignmentResult, Association, ASSOCIATION_TOLERANCE,
};
pub use metrics::{ate, evaluate, rte, trajectory_length, MetricsReport, DEFAULT_RTE_DELTA};
pub use tum::{load_tum, parse_tum, save_tum, write_tum};

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::RelativeMotion;

/// Camera-to-world pose at a timestamp (seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    timestamp: f64,
    rotation: UnitQuaternion<f64>,
    position: Vector3<f64>,
}

impl Pose {
    pub fn new(timestamp: f64, rotation: UnitQuaternion<f64>, position: Vector3<f64>) -> Result<Self> {
        if !timestamp.is_finite() {
            return Err(Error::param("pose timestamp must be finite"));
        }
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::param("pose position must be finite"));
        }
        Ok(Self {
            timestamp,
            rotation,
            position,
        })
    }

    pub fn identity(timestamp: f64) -> Self {
        Self {
            timestamp,
            rotation: UnitQuaternion::identity(),
            position: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    #[inline]
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    #[inline]
    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.rotation)
    }

    pub fn from_isometry(timestamp: f64, iso: &Isometry3<f64>) -> Result<Self> {
        Self::new(timestamp, iso.rotation, iso.translation.vector)
    }

    /// Relative motion from this pose to `other`, with the true (unnormalized)
    /// translation.
    pub fn relative_to(&self, other: &Pose) -> Isometry3<f64> {
        self.isometry().inverse() * other.isometry()
    }
}

/// Poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if let Some(w) = poses.windows(2).find(|w| !(w[1].timestamp > w[0].timestamp)) {
            return Err(Error::param(format!(
                "timestamps must be strictly increasing ({} then {})",
                w[0].timestamp, w[1].timestamp
            )));
        }
        Ok(Self { poses })
    }

    #[inline]
    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.position).collect()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.timestamp).collect()
    }

    /// Applies a world-frame isometry to every pose.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Trajectory {
        self.map_poses(|p| {
            let moved = iso * p.isometry();
            Pose {
                rotation: moved.rotation,
                position: moved.translation.vector,
                ..*p
            }
        })
    }

    /// `s · R · p + t` on positions, `R · q` on orientations.
    pub fn similarity_transformed(&self, a: &AlignmentResult) -> Trajectory {
        self.map_poses(|p| Pose {
            rotation: a.rotation * p.rotation,
            position: a.apply(&p.position),
            ..*p
        })
    }

    fn map_poses(&self, f: impl Fn(&Pose) -> Pose) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().map(f).collect(),
        }
    }
}

/// Chains relative motions into absolute poses, starting from the identity
/// at `timestamps[0]`: `pose_{i+1} = pose_i ∘ motion_i`, each unit
/// translation taken as one step of length one.
pub fn compose_trajectory(motions: &[RelativeMotion], timestamps: &[f64]) -> Result<Trajectory> {
    if motions.is_empty() {
        return Err(Error::param("at least one relative motion is required"));
    }
    if timestamps.len() != motions.len() + 1 {
        return Err(Error::param(format!(
            "{} motions need {} timestamps, got {}",
            motions.len(),
            motions.len() + 1,
            timestamps.len()
        )));
    }
    let mut poses = Vec::with_capacity(timestamps.len());
    let mut current = Isometry3::identity();
    poses.push(Pose::from_isometry(timestamps[0], &current)?);
    for (m, &ts) in motions.iter().zip(&timestamps[1..]) {
        let step = Isometry3::from_parts(Translation3::from(m.translation()), m.rotation());
        current *= step;
        poses.push(Pose::from_isometry(ts, &current)?);
    }
    Trajectory::new(poses)
}
