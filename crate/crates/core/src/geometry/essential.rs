//! Weighted normalized eight-point solver inside a seeded RANSAC loop, with
//! each new best hypothesis refit on its inliers.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::correspondences::MIN_CORRESPONDENCES;
use super::{CameraIntrinsics, CorrespondenceSet};
use crate::error::{Error, Result};

/// A design matrix whose second-smallest singular value falls below this
/// fraction of the largest has a nullspace of dimension > 1.
const NULLSPACE_TOLERANCE: f64 = 1e-8;

/// Confidences are rescaled to a unit maximum and rounded to this many
/// fractional bits, so that a global rescale of the input weights cannot
/// change any downstream bit.
const WEIGHT_BITS: i32 = 24;

/// Sampson-reweighted solves in each inlier refit.
const REWEIGHT_ROUNDS: usize = 3;

/// Refit-and-reclassify rounds applied to each new best hypothesis.
const LOCAL_ROUNDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub iterations: usize,
    /// Sampson distance threshold in normalized image coordinates.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            threshold: 2e-4,
            seed: 42,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("ransac iterations must be >= 1"));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::param(format!(
                "ransac threshold must be > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssentialEstimate {
    /// Essential matrix with singular values `(1, 1, 0)`.
    pub matrix: Matrix3<f64>,
    /// One flag per input correspondence.
    pub inliers: Vec<bool>,
}

impl EssentialEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }

    pub fn inlier_ratio(&self) -> f64 {
        self.inlier_count() as f64 / self.inliers.len().max(1) as f64
    }
}

/// First-order geometric error `(x₂ᵀEx₁)² / (|E x₁|²₁,₂ + |Eᵀx₂|²₁,₂)` for
/// normalized homogeneous points.
pub fn sampson_distance(e: &Matrix3<f64>, x1: &Vector3<f64>, x2: &Vector3<f64>) -> f64 {
    let ex1 = e * x1;
    let etx2 = e.transpose() * x2;
    let r = x2.dot(&ex1);
    let denom = ex1.x * ex1.x + ex1.y * ex1.y + etx2.x * etx2.x + etx2.y * etx2.y;
    if denom <= f64::MIN_POSITIVE {
        return f64::INFINITY;
    }
    r * r / denom
}

/// Gradient norm of the epipolar residual `x2ᵀ E x1`; the square root of the
/// Sampson denominator.
fn sampson_scale(e: &Matrix3<f64>, x1: &Vector3<f64>, x2: &Vector3<f64>) -> f64 {
    let ex1 = e * x1;
    let etx2 = e.transpose() * x2;
    (ex1.x * ex1.x + ex1.y * ex1.y + etx2.x * etx2.x + etx2.y * etx2.y)
        .sqrt()
        .max(1e-12)
}

/// Similarity moving the weighted centroid to the origin with mean weighted
/// distance `√2`.
fn hartley(points: &[Vector3<f64>], weights: &[f64]) -> Matrix3<f64> {
    let wsum: f64 = weights.iter().sum();
    let (mut cx, mut cy) = (0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        cx += w * p.x;
        cy += w * p.y;
    }
    cx /= wsum;
    cy /= wsum;
    let mut mean = 0.0;
    for (p, w) in points.iter().zip(weights) {
        mean += w * (p.x - cx).hypot(p.y - cy);
    }
    mean /= wsum;
    let s = if mean > 0.0 {
        std::f64::consts::SQRT_2 / mean
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

#[inline]
fn design_row(p1: &Vector3<f64>, p2: &Vector3<f64>, w: f64) -> [f64; 9] {
    [
        w * p2.x * p1.x,
        w * p2.x * p1.y,
        w * p2.x,
        w * p2.y * p1.x,
        w * p2.y * p1.y,
        w * p2.y,
        w * p1.x,
        w * p1.y,
        w,
    ]
}

/// Closest matrix with singular values `(1, 1, 0)`.
fn project_to_essential(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    if !(svd.singular_values.max() > 0.0) {
        return None;
    }
    // Singular values come back in decreasing order.
    Some(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * v_t)
}

/// Solves the (weighted) eight-point system over `idx` in Hartley-normalized
/// coordinates and returns `E` in normalized camera coordinates. `None` when
/// the equations leave more than a one-dimensional nullspace.
fn solve(
    m1: &[Vector3<f64>],
    m2: &[Vector3<f64>],
    weights: &[f64],
    idx: &[usize],
    t1: &Matrix3<f64>,
    t2: &Matrix3<f64>,
) -> Option<Matrix3<f64>> {
    // Minimal samples are zero-padded to a square system; the padding adds
    // one zero singular value which is the solution direction anyway.
    let mut a = DMatrix::<f64>::zeros(idx.len().max(9), 9);
    for (r, &i) in idx.iter().enumerate() {
        let row = design_row(&(t1 * m1[i]), &(t2 * m2[i]), weights[i]);
        for (c, v) in row.into_iter().enumerate() {
            a[(r, c)] = v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let largest = s[order[0]];
    if !(largest > 0.0) || s[order[7]] <= NULLSPACE_TOLERANCE * largest {
        return None;
    }
    let e_hat = Matrix3::from_fn(|r, c| v_t[(order[8], 3 * r + c)]);
    project_to_essential(&(t2.transpose() * e_hat * t1))
}

/// Inlier refit: a weighted eight-point solve followed by Sampson-reweighted
/// solves.
fn refit(
    m1: &[Vector3<f64>],
    m2: &[Vector3<f64>],
    weights: &[f64],
    idx: &[usize],
    t1: &Matrix3<f64>,
    t2: &Matrix3<f64>,
) -> Option<Matrix3<f64>> {
    let mut e = solve(m1, m2, weights, idx, t1, t2)?;
    let mut scaled = weights.to_vec();
    for _ in 0..REWEIGHT_ROUNDS {
        for &i in idx {
            scaled[i] = weights[i] / sampson_scale(&e, &m1[i], &m2[i]);
        }
        match solve(m1, m2, &scaled, idx, t1, t2) {
            Some(next) => e = next,
            None => break,
        }
    }
    Some(e)
}

fn normalized_weights(cs: &CorrespondenceSet) -> Vec<f64> {
    let max = cs.items().iter().map(|c| c.weight).fold(0.0, f64::max);
    let q = (2.0f64).powi(WEIGHT_BITS);
    cs.items()
        .iter()
        .map(|c| ((c.weight / max * q).round() / q).max(1.0 / q))
        .collect()
}

/// Robust essential matrix from weighted pixel correspondences.
///
/// Points are lifted with `K⁻¹`, Hartley-normalized, and each equation row is
/// scaled by its correspondence weight. Hypotheses from random eight-point
/// samples are scored by the total weight of correspondences whose Sampson
/// distance is below `ransac.threshold`; the best one is refit on all of its
/// inliers.
pub fn estimate_essential(
    cs: &CorrespondenceSet,
    k: &CameraIntrinsics,
    ransac: &RansacParams,
) -> Result<EssentialEstimate> {
    ransac.validate()?;
    let n = cs.len();
    if n < MIN_CORRESPONDENCES {
        return Err(Error::DegenerateInput(format!(
            "{n} correspondences, need at least {MIN_CORRESPONDENCES}"
        )));
    }
    let m1: Vec<Vector3<f64>> = cs.items().iter().map(|c| k.unproject(c.x1)).collect();
    let m2: Vec<Vector3<f64>> = cs.items().iter().map(|c| k.unproject(c.x2)).collect();
    let weights = normalized_weights(cs);
    let t1 = hartley(&m1, &weights);
    let t2 = hartley(&m2, &weights);

    let classify = |e: &Matrix3<f64>| -> (Vec<bool>, f64) {
        let mut score = 0.0;
        let mask = (0..n)
            .map(|i| {
                let inlier = sampson_distance(e, &m1[i], &m2[i]) < ransac.threshold;
                if inlier {
                    score += weights[i];
                }
                inlier
            })
            .collect();
        (mask, score)
    };

    // Refit on the inliers and reclassify until the inlier set settles or
    // the score stops improving.
    let polish = |e: Matrix3<f64>, mask: Vec<bool>, score: f64| -> (Matrix3<f64>, Vec<bool>, f64) {
        let (mut e, mut mask, mut score) = (e, mask, score);
        for _ in 0..LOCAL_ROUNDS {
            let idx: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
            if idx.len() < MIN_CORRESPONDENCES {
                break;
            }
            let Some(refit) = refit(&m1, &m2, &weights, &idx, &t1, &t2) else {
                break;
            };
            let (next_mask, next_score) = classify(&refit);
            if next_score < score || (next_score == score && next_mask == mask) {
                break;
            }
            (e, mask, score) = (refit, next_mask, next_score);
        }
        (e, mask, score)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(ransac.seed);
    let mut best: Option<(Matrix3<f64>, Vec<bool>, f64)> = None;
    for _ in 0..ransac.iterations {
        let idx = sample(&mut rng, n, MIN_CORRESPONDENCES).into_vec();
        let Some(e) = solve(&m1, &m2, &weights, &idx, &t1, &t2) else {
            continue;
        };
        let (mask, score) = classify(&e);
        if best.as_ref().is_none_or(|(_, _, s)| score > *s) {
            best = Some(polish(e, mask, score));
        }
    }
    let Some((e, mask, _)) = best else {
        return Err(Error::DegenerateGeometry(
            "every sample was degenerate (zero baseline or collinear points)".into(),
        ));
    };

    let inlier_idx: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if inlier_idx.len() < MIN_CORRESPONDENCES {
        return Err(Error::DegenerateGeometry(format!(
            "best hypothesis has only {} inliers",
            inlier_idx.len()
        )));
    }
    let e = refit(&m1, &m2, &weights, &inlier_idx, &t1, &t2).unwrap_or(e);
    let (inliers, _) = classify(&e);
    Ok(EssentialEstimate { matrix: e, inliers })
}
