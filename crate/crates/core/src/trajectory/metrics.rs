use super::align::{associate, matched_positions, umeyama_points, Association, ASSOCIATION_TOLERANCE};
use super::{Pose, Trajectory};
use crate::error::{Error, Result};

/// Default RTE window, in frames.
pub const DEFAULT_RTE_DELTA: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub ate_rmse: f64,
    pub rte_rmse: f64,
    /// Length of the reference trajectory.
    pub length: f64,
    /// Number of associated poses.
    pub pose_count: usize,
}

fn associated(estimate: &Trajectory, reference: &Trajectory) -> Result<Association> {
    let assoc = associate(estimate, reference, ASSOCIATION_TOLERANCE);
    if assoc.pairs.len() < 2 {
        return Err(Error::param(format!(
            "{} associated poses, need at least 2",
            assoc.pairs.len()
        )));
    }
    Ok(assoc)
}

fn rmse(sq: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = sq.len();
    (sq.sum::<f64>() / n as f64).sqrt()
}

/// Positional RMSE over timestamp-associated poses, after a similarity
/// alignment of `estimate` onto `reference` when `align` is set.
pub fn ate(estimate: &Trajectory, reference: &Trajectory, align: bool) -> Result<f64> {
    let assoc = associated(estimate, reference)?;
    let (mut src, dst) = matched_positions(estimate, reference, &assoc);
    if align {
        let a = umeyama_points(&src, &dst, true)?;
        src.iter_mut().for_each(|p| *p = a.apply(p));
    }
    Ok(rmse(src.iter().zip(&dst).map(|(s, d)| (s - d).norm_squared())))
}

/// Relative trajectory error over windows of `delta_frames` associated
/// poses. Each estimated window is rigidly moved so its first pose
/// coincides with the reference's; the error is the endpoint distance.
pub fn rte(estimate: &Trajectory, reference: &Trajectory, delta_frames: usize) -> Result<f64> {
    let assoc = associated(estimate, reference)?;
    let n = assoc.pairs.len();
    if delta_frames == 0 || delta_frames >= n {
        return Err(Error::param(format!(
            "rte window must be in 1..{n}, got {delta_frames}"
        )));
    }
    let pose = |traj: &Trajectory, i: usize| -> Pose { traj.poses()[i] };
    let errors = (0..n - delta_frames).map(|i| {
        let (e0, r0) = assoc.pairs[i];
        let (e1, r1) = assoc.pairs[i + delta_frames];
        let (ea, eb) = (pose(estimate, e0), pose(estimate, e1));
        let (ra, rb) = (pose(reference, r0), pose(reference, r1));
        let moved = ra.isometry() * ea.isometry().inverse() * eb.isometry();
        (moved.translation.vector - rb.position()).norm_squared()
    });
    Ok(rmse(errors))
}

/// Sum of consecutive position distances.
pub fn trajectory_length(t: &Trajectory) -> f64 {
    t.poses()
        .windows(2)
        .map(|w| (w[1].position() - w[0].position()).norm())
        .sum()
}

/// Full report: `estimate` is similarity-aligned onto `reference` first,
/// then ATE and RTE are computed on the aligned estimate.
pub fn evaluate(estimate: &Trajectory, reference: &Trajectory, delta_frames: usize) -> Result<MetricsReport> {
    let assoc = associated(estimate, reference)?;
    let (src, dst) = matched_positions(estimate, reference, &assoc);
    let alignment = umeyama_points(&src, &dst, true)?;
    let aligned = estimate.similarity_transformed(&alignment);
    let delta = delta_frames.min(assoc.pairs.len() - 1);
    Ok(MetricsReport {
        ate_rmse: ate(&aligned, reference, false)?,
        rte_rmse: rte(&aligned, reference, delta)?,
        length: trajectory_length(reference),
        pose_count: assoc.pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::AlignmentResult;
    use nalgebra::{Isometry3, UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_walk(seed: u64, n: usize) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Vector3::zeros();
        let mut q = UnitQuaternion::identity();
        let mut poses = Vec::new();
        for i in 0..n {
            p += Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.3..0.3),
            );
            q *= UnitQuaternion::from_euler_angles(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
            );
            poses.push(Pose::new(i as f64 * 0.1, q, p).unwrap());
        }
        Trajectory::new(poses).unwrap()
    }

    #[test]
    fn length_examples() {
        let mk = |pts: &[[f64; 3]]| {
            Trajectory::new(
                pts.iter()
                    .enumerate()
                    .map(|(i, p)| Pose::new(i as f64, UnitQuaternion::identity(), Vector3::from(*p)).unwrap())
                    .collect(),
            )
            .unwrap()
        };
        assert_eq!(
            trajectory_length(&mk(&[[0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]])),
            2.0
        );
        assert_eq!(trajectory_length(&mk(&[[0.0; 3], [3.0, 4.0, 0.0]])), 5.0);
    }

    #[test]
    fn length_matches_direct_sum() {
        let t = random_walk(5, 200);
        let pos = t.positions();
        let mut direct = 0.0;
        for i in 1..pos.len() {
            let d = pos[i] - pos[i - 1];
            direct += (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        }
        assert!((trajectory_length(&t) - direct).abs() < 1e-12);
    }

    #[test]
    fn ate_identity_offset_and_symmetry() {
        let a = random_walk(1, 50);
        assert_eq!(ate(&a, &a, false).unwrap(), 0.0);
        assert!(ate(&a, &a, true).unwrap() < 1e-12);
        let d = Vector3::new(0.3, -0.4, 1.2);
        let shifted = a.transformed(&Isometry3::translation(d.x, d.y, d.z));
        assert!((ate(&shifted, &a, false).unwrap() - d.norm()).abs() < 1e-12);
        let b = random_walk(2, 50);
        assert_eq!(ate(&a, &b, false).unwrap(), ate(&b, &a, false).unwrap());
    }

    #[test]
    fn ate_matches_direct_rmse() {
        let a = random_walk(3, 80);
        let b = random_walk(4, 80);
        let (pa, pb) = (a.positions(), b.positions());
        let mut acc = 0.0;
        for i in 0..pa.len() {
            let d = pa[i] - pb[i];
            acc += d.x * d.x + d.y * d.y + d.z * d.z;
        }
        let direct = (acc / pa.len() as f64).sqrt();
        assert!((ate(&a, &b, false).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn aligned_ate_invariant_under_similarity() {
        let reference = random_walk(6, 60);
        let estimate = random_walk(7, 60);
        let base = ate(&estimate, &reference, true).unwrap();
        let s = AlignmentResult {
            scale: 3.7,
            rotation: UnitQuaternion::from_euler_angles(0.4, -1.1, 2.0),
            translation: Vector3::new(5.0, -2.0, 9.0),
        };
        let moved = ate(&estimate.similarity_transformed(&s), &reference, true).unwrap();
        assert!((base - moved).abs() < 1e-9, "{base} vs {moved}");
    }

    #[test]
    fn alignment_residual_matches_aligned_ate() {
        let reference = random_walk(8, 40);
        let estimate = random_walk(9, 40);
        let a = crate::trajectory::umeyama_align(&estimate, &reference, true).unwrap();
        let applied = ate(&estimate.similarity_transformed(&a), &reference, false).unwrap();
        assert!((applied - ate(&estimate, &reference, true).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rte_zero_for_identical_and_rigidly_moved() {
        let a = random_walk(10, 60);
        assert!(rte(&a, &a, 10).unwrap() < 1e-12);
        let moved = a.transformed(&Isometry3::new(
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(0.2, 0.1, -0.4),
        ));
        assert!(rte(&moved, &a, 10).unwrap() < 1e-12);
    }

    #[test]
    fn rte_window_bounds() {
        let a = random_walk(11, 20);
        assert!(rte(&a, &a, 0).is_err());
        assert!(rte(&a, &a, 20).is_err());
        assert!(rte(&a, &a, 19).is_ok());
    }

    #[test]
    fn rte_matches_window_loop() {
        let reference = random_walk(12, 70);
        // Known drift: a slowly growing yaw error plus a scale bias.
        let estimate = Trajectory::new(
            reference
                .poses()
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let drift = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.002 * i as f64);
                    Pose::new(p.timestamp(), drift * p.rotation(), drift * p.position() * 1.01).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let delta = 7;
        let (ep, rp) = (estimate.poses(), reference.poses());
        let mut acc = 0.0;
        let count = ep.len() - delta;
        for i in 0..count {
            // Estimated displacement expressed in the estimate's first-pose
            // frame, mapped into the reference's first-pose frame.
            let local = ep[i].rotation().inverse() * (ep[i + delta].position() - ep[i].position());
            let endpoint = rp[i].position() + rp[i].rotation() * local;
            acc += (endpoint - rp[i + delta].position()).norm_squared();
        }
        let direct = (acc / count as f64).sqrt();
        let got = rte(&estimate, &reference, delta).unwrap();
        assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
        assert!(got > 0.0);
    }

    #[test]
    fn full_window_is_single_comparison() {
        let reference = random_walk(13, 15);
        let estimate = random_walk(14, 15);
        let n = reference.len();
        let (e, r) = (estimate.poses(), reference.poses());
        let local = e[0].rotation().inverse() * (e[n - 1].position() - e[0].position());
        let endpoint = r[0].position() + r[0].rotation() * local;
        let direct = (endpoint - r[n - 1].position()).norm();
        assert!((rte(&estimate, &reference, n - 1).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn evaluate_report() {
        let reference = random_walk(15, 60);
        let s = AlignmentResult {
            scale: 0.5,
            rotation: UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
            translation: Vector3::new(1.0, 1.0, 1.0),
        };
        let r = evaluate(
            &reference.similarity_transformed(&s),
            &reference,
            DEFAULT_RTE_DELTA,
        )
        .unwrap();
        assert!(r.ate_rmse < 1e-9 && r.rte_rmse < 1e-9);
        assert_eq!(r.pose_count, 60);
        assert!((r.length - trajectory_length(&reference)).abs() < 1e-15);
    }
}
