use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::{CameraIntrinsics, CorrespondenceSet, RelativeMotion};
use crate::error::{Error, Result};

/// Relative tolerance on the `(1, 1, 0)` singular value pattern.
const ESSENTIAL_TOLERANCE: f64 = 1e-6;

/// Depths along both rays of the midpoint triangulation, for a second
/// camera centred at `c` (first-camera frame) with ray `d2` expressed in the
/// first camera's frame. `None` for (near-)parallel rays.
fn midpoint_depths(d1: &Vector3<f64>, c: &Vector3<f64>, d2: &Vector3<f64>) -> Option<(f64, f64)> {
    let a = d1.dot(d1);
    let b = d1.dot(d2);
    let cc = d2.dot(d2);
    let p = d1.dot(c);
    let q = d2.dot(c);
    let det = b * b - a * cc;
    if det.abs() <= 1e-12 * a * cc {
        return None;
    }
    let l1 = (b * q - cc * p) / det;
    let l2 = (a * q - b * p) / det;
    Some((l1, l2))
}

/// Recovers the relative pose from an essential matrix.
///
/// Of the four `(R, t)` factorizations, returns the one that places the most
/// correspondences in front of both cameras (midpoint triangulation). The
/// result is the pose of the second camera in the first camera's frame with
/// unit translation.
pub fn decompose_essential(
    e: &Matrix3<f64>,
    cs: &CorrespondenceSet,
    k: &CameraIntrinsics,
) -> Result<RelativeMotion> {
    let svd = e.svd(true, true);
    let (mut u, mut v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v)) => (u, v),
        _ => return Err(Error::param("essential matrix SVD failed")),
    };
    let s = svd.singular_values;
    let scale = s[0];
    if !(scale > 0.0)
        || (s[0] - s[1]).abs() > ESSENTIAL_TOLERANCE * scale
        || s[2].abs() > ESSENTIAL_TOLERANCE * scale
    {
        return Err(Error::param(format!(
            "matrix is not essential: singular values {:?}",
            s.as_slice()
        )));
    }
    if cs.is_empty() {
        return Err(Error::DegenerateInput(
            "no correspondences for cheirality test".into(),
        ));
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let rotations = [u * w * v_t, u * w.transpose() * v_t];
    let t_dir: Vector3<f64> = u.column(2).into();

    let rays: Vec<(Vector3<f64>, Vector3<f64>)> = cs
        .items()
        .iter()
        .map(|c| (k.unproject(c.x1), k.unproject(c.x2)))
        .collect();

    // Candidates map first-camera points into the second camera:
    // X_b = R X_a + t.
    let mut best: Option<(usize, Matrix3<f64>, Vector3<f64>)> = None;
    for r in rotations {
        for t in [t_dir, -t_dir] {
            let centre = -(r.transpose() * t);
            let positive = rays
                .iter()
                .filter(|(m1, m2)| {
                    let d2 = r.transpose() * m2;
                    matches!(midpoint_depths(m1, &centre, &d2), Some((l1, l2)) if l1 > 0.0 && l2 > 0.0)
                })
                .count();
            if best.as_ref().is_none_or(|(n, _, _)| positive > *n) {
                best = Some((positive, r, t));
            }
        }
    }
    let (positive, r_ba, t_ba) = best.expect("four candidates evaluated");
    if 2 * positive <= rays.len() {
        return Err(Error::Cheirality {
            positive,
            total: rays.len(),
        });
    }
    let r_ab = r_ba.transpose();
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r_ab));
    RelativeMotion::new(rotation, -(r_ab * t_ba))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::testutil::{intrinsics, random_motion, scene};
    use crate::geometry::{
        direction_angle_between, estimate_essential, rotation_angle_between, RansacParams,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn recover(cs: &CorrespondenceSet) -> RelativeMotion {
        let k = intrinsics();
        let est = estimate_essential(cs, &k, &RansacParams::default()).unwrap();
        decompose_essential(&est.matrix, &cs.select(&est.inliers), &k).unwrap()
    }

    #[test]
    fn noiseless_recovery_over_seeds() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let truth = random_motion(&mut rng);
            let got = recover(&scene(seed, &truth, 0.3, 150));
            let rot = rotation_angle_between(&got.rotation(), &truth.rotation()).to_degrees();
            let dir = direction_angle_between(&got.translation(), &truth.translation()).to_degrees();
            assert!(rot < 0.1, "seed {seed}: rotation error {rot}°");
            assert!(dir < 0.5, "seed {seed}: translation error {dir}°");
        }
    }

    #[test]
    fn pure_x_translation_sign_fixed_by_cheirality() {
        for dir in [Vector3::x(), -Vector3::x()] {
            let truth = RelativeMotion::new(UnitQuaternion::identity(), dir).unwrap();
            let got = recover(&scene(5, &truth, 0.5, 100));
            assert!(got.rotation().angle() < 1e-9);
            assert!((got.translation() - dir).norm() < 1e-9, "{:?}", got.translation());
        }
    }

    #[test]
    fn reversed_order_gives_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let truth = random_motion(&mut rng);
        let cs = scene(78, &truth, 0.3, 150);
        let fwd = recover(&cs);
        let back = recover(&cs.reversed());
        let expect = fwd.inverse();
        let r_fwd = fwd.rotation().to_rotation_matrix().into_inner();
        assert!(rotation_angle_between(&back.rotation(), &expect.rotation()) < 1e-6);
        assert!((back.translation() + r_fwd.transpose() * fwd.translation()).norm() < 1e-6);
    }

    #[test]
    fn rotation_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let got = recover(&scene(6, &random_motion(&mut rng), 0.3, 100));
        let r = got.rotation().to_rotation_matrix().into_inner();
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
        assert!((got.rotation().norm() - 1.0).abs() < 1e-9);
        assert!((got.translation().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_essential_matrix() {
        let cs = scene(
            1,
            &RelativeMotion::new(UnitQuaternion::identity(), Vector3::x()).unwrap(),
            0.5,
            20,
        );
        assert!(decompose_essential(&Matrix3::identity(), &cs, &intrinsics()).is_err());
    }

    #[test]
    fn cheirality_failure() {
        // Points behind the first camera for every candidate: mirror the scene.
        let truth = RelativeMotion::new(UnitQuaternion::identity(), Vector3::x()).unwrap();
        let k = intrinsics();
        let cs = scene(2, &truth, 0.5, 60);
        let mut items = cs.items().to_vec();
        let half = items.len() / 2;
        // Swap the match direction for half of the points so no single
        // candidate can place more than half in front of both cameras.
        for c in items.iter_mut().take(half) {
            let shift = c.x2 - c.x1;
            c.x2 = c.x1 - shift;
        }
        let e = truth.essential();
        let res = decompose_essential(&e, &CorrespondenceSet::new(items).unwrap(), &k);
        assert!(matches!(res, Err(Error::Cheirality { .. })), "{res:?}");
    }
}
