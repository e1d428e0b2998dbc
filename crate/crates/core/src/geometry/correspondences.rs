use nalgebra::Vector2;

use super::{Correspondence, CorrespondenceSet, PoseBackendMode};
use crate::error::{check_shape, Error, Result};
use crate::flow::FlowField;
use crate::imaging::WeightMap;

/// Minimum number of correspondences for an eight-point estimate.
pub const MIN_CORRESPONDENCES: usize = 8;

/// Samples the flow on a regular grid (offset `stride / 2`) and turns each
/// sample into a correspondence.
///
/// * `ScaledFlow`: `x2 = x1 + w(x1)·F(x1)`, unit confidence.
/// * `ConfidenceWeighted`: `x2 = x1 + F(x1)`, confidence `w(x1)`.
///
/// Missing weights count as one. Matches that leave the image are dropped.
pub fn flow_to_correspondences(
    flow: &FlowField,
    weights: Option<&WeightMap>,
    stride: usize,
    mode: PoseBackendMode,
) -> Result<CorrespondenceSet> {
    if stride < 1 {
        return Err(Error::param("stride must be >= 1"));
    }
    if let Some(w) = weights {
        check_shape(flow.dims(), w.dims())?;
    }
    let (w, h) = flow.dims();
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    let mut items = Vec::new();
    for y in (stride / 2..h).step_by(stride) {
        for x in (stride / 2..w).step_by(stride) {
            let (u, v) = flow.at(x, y);
            let wt = weights.map_or(1.0, |m| m.get(x, y));
            let (step, confidence) = match mode {
                PoseBackendMode::ScaledFlow => (Vector2::new(wt * u, wt * v), 1.0),
                PoseBackendMode::ConfidenceWeighted => (Vector2::new(u, v), wt),
            };
            let x1 = Vector2::new(x as f64, y as f64);
            let x2 = x1 + step;
            if !(0.0..=max_x).contains(&x2.x) || !(0.0..=max_y).contains(&x2.y) {
                continue;
            }
            items.push(Correspondence {
                x1,
                x2,
                weight: confidence,
            });
        }
    }
    if items.len() < MIN_CORRESPONDENCES {
        return Err(Error::DegenerateInput(format!(
            "{} correspondences survive, need at least {MIN_CORRESPONDENCES}",
            items.len()
        )));
    }
    CorrespondenceSet::new(items)
}
