use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::Trajectory;
use crate::error::{Error, Result};

/// Maximum timestamp difference (seconds) for two poses to be associated.
pub const ASSOCIATION_TOLERANCE: f64 = 0.02;

/// Ratio below which the second singular value of a point cloud's scatter
/// counts as zero (collinear points).
const RANK_TOLERANCE: f64 = 1e-10;

/// Index pairs `(estimate, reference)` matched by nearest timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub pairs: Vec<(usize, usize)>,
    /// Estimate poses without a reference partner.
    pub unmatched: usize,
}

impl Association {
    /// Fraction of estimate poses that found a partner.
    pub fn matched_fraction(&self) -> f64 {
        let total = self.pairs.len() + self.unmatched;
        if total == 0 {
            0.0
        } else {
            self.pairs.len() as f64 / total as f64
        }
    }
}

/// One-to-one nearest-neighbour association on timestamps within
/// `tolerance`. Both trajectories are time-ordered, so a reference pose is
/// never used twice.
pub fn associate(estimate: &Trajectory, reference: &Trajectory, tolerance: f64) -> Association {
    let ref_ts = reference.timestamps();
    let mut pairs = Vec::new();
    let mut unmatched = 0;
    let mut next_free = 0usize;
    for (i, pose) in estimate.poses().iter().enumerate() {
        let t = pose.timestamp();
        let pos = ref_ts.partition_point(|&r| r < t);
        let candidates = [pos.checked_sub(1), Some(pos)];
        let best = candidates
            .into_iter()
            .flatten()
            .filter(|&j| j < ref_ts.len() && j >= next_free)
            .min_by(|&a, &b| (ref_ts[a] - t).abs().total_cmp(&(ref_ts[b] - t).abs()));
        match best {
            Some(j) if (ref_ts[j] - t).abs() <= tolerance => {
                pairs.push((i, j));
                next_free = j + 1;
            }
            _ => unmatched += 1,
        }
    }
    Association { pairs, unmatched }
}

/// Similarity `p ↦ s R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    pub scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl AlignmentResult {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// Least-squares similarity (Umeyama) taking `source` onto `target`:
/// minimizes `Σ |s R source_i + t - target_i|²`. With `with_scale = false`
/// the scale is fixed to one.
pub fn umeyama_points(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    with_scale: bool,
) -> Result<AlignmentResult> {
    let n = source.len();
    if n != target.len() {
        return Err(Error::param(format!(
            "alignment needs equal point counts, got {n} and {}",
            target.len()
        )));
    }
    if n < 3 {
        return Err(Error::param(format!(
            "alignment needs at least 3 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mu_s = source.iter().sum::<Vector3<f64>>() / nf;
    let mu_t = target.iter().sum::<Vector3<f64>>() / nf;

    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    let mut scatter_s = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        let ds = s - mu_s;
        let dt = t - mu_t;
        cov += dt * ds.transpose();
        scatter_s += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= nf;
    var_s /= nf;

    for (name, scatter) in [
        ("estimate", scatter_s),
        ("reference", {
            let mut m = Matrix3::zeros();
            for t in target {
                let d = t - mu_t;
                m += d * d.transpose();
            }
            m
        }),
    ] {
        let sv = scatter.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        if !(sv[0] > 0.0) || sv[1] <= RANK_TOLERANCE * sv[0] {
            return Err(Error::RankDeficient(format!(
                "{name} positions are collinear or coincident; rotation is undetermined"
            )));
        }
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v)) => (u, v),
        _ => return Err(Error::RankDeficient("covariance SVD failed".into())),
    };
    let d = svd.singular_values;
    let mut sign = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * v_t;
    let scale = if with_scale {
        (d[0] * sign[(0, 0)] + d[1] * sign[(1, 1)] + d[2] * sign[(2, 2)]) / var_s
    } else {
        1.0
    };
    let rotation = UnitQuaternion::from_matrix(&r);
    let translation = mu_t - scale * (rotation * mu_s);
    Ok(AlignmentResult {
        scale,
        rotation,
        translation,
    })
}

/// Similarity alignment of `estimate` onto `reference` over
/// timestamp-associated poses.
pub fn umeyama_align(
    estimate: &Trajectory,
    reference: &Trajectory,
    with_scale: bool,
) -> Result<AlignmentResult> {
    let assoc = associate(estimate, reference, ASSOCIATION_TOLERANCE);
    let (src, dst) = matched_positions(estimate, reference, &assoc);
    umeyama_points(&src, &dst, with_scale)
}

pub(super) fn matched_positions(
    estimate: &Trajectory,
    reference: &Trajectory,
    assoc: &Association,
) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    assoc
        .pairs
        .iter()
        .map(|&(i, j)| (estimate.poses()[i].position(), reference.poses()[j].position()))
        .unzip()
}
