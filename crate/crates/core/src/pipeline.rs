//! Per-frame-pair composition: transmission, weights, flow, correspondences
//! and relative pose.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{estimate_flow, weight_flow, FlowField, FlowParams};
use crate::geometry::{
    decompose_essential, estimate_essential, flow_to_correspondences, CameraIntrinsics, PoseBackendMode,
    RansacParams, RelativeMotion,
};
use crate::imaging::{
    estimate_ambient, estimate_transmission, invert, normalize_transmission, AmbientLight, Image,
    NormalizationParams, TransmissionMap, WeightMap, AMBIENT_PATCH,
};
use crate::trajectory::{compose_trajectory, Trajectory};

/// Default grid spacing (pixels) between sampled flow vectors.
pub const DEFAULT_SAMPLE_STRIDE: usize = 8;

/// Everything the per-pair estimate depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    pub intrinsics: CameraIntrinsics,
    pub normalization: NormalizationParams,
    pub flow: FlowParams,
    pub ransac: RansacParams,
    pub mode: PoseBackendMode,
    pub sample_stride: usize,
}

impl PipelineParams {
    pub fn new(intrinsics: CameraIntrinsics, normalization: NormalizationParams) -> Self {
        Self {
            intrinsics,
            normalization,
            flow: FlowParams::default(),
            ransac: RansacParams::default(),
            mode: PoseBackendMode::default(),
            sample_stride: DEFAULT_SAMPLE_STRIDE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ransac.validate()?;
        if self.sample_stride < 1 {
            return Err(Error::param("sample_stride must be >= 1"));
        }
        Ok(())
    }
}

/// Intermediate products of one frame pair.
#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub ambient: AmbientLight,
    /// Transmission of the first frame.
    pub transmission: TransmissionMap,
    pub weights: WeightMap,
    /// Raw flow from the first frame to the second.
    pub flow: FlowField,
}

impl PairAnalysis {
    /// The flow scaled by the weights.
    pub fn weighted_flow(&self) -> Result<FlowField> {
        weight_flow(&self.flow, &self.weights)
    }
}

/// Estimates transmission and weights on `frame_a` and the flow to `frame_b`.
pub fn analyze_pair(
    frame_a: &Image,
    frame_b: &Image,
    normalization: NormalizationParams,
    flow_params: FlowParams,
) -> Result<PairAnalysis> {
    let ambient = estimate_ambient(frame_a);
    let transmission = estimate_transmission(frame_a, ambient, AMBIENT_PATCH)?;
    let weights = normalize_transmission(&invert(&transmission), normalization)?;
    let flow = estimate_flow(frame_a, frame_b, flow_params)?;
    Ok(PairAnalysis {
        ambient,
        transmission,
        weights,
        flow,
    })
}

/// Pose estimate for one pair with the diagnostics the run log reports.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMotion {
    pub motion: RelativeMotion,
    pub correspondences: usize,
    pub inlier_ratio: f64,
}

/// Geometric back end on an analysed pair. `weights = None` runs the
/// unweighted baseline.
pub fn motion_from_flow(
    flow: &FlowField,
    weights: Option<&WeightMap>,
    params: &PipelineParams,
) -> Result<PairMotion> {
    let cs = flow_to_correspondences(flow, weights, params.sample_stride, params.mode)?;
    let estimate = estimate_essential(&cs, &params.intrinsics, &params.ransac)?;
    let inliers = cs.select(&estimate.inliers);
    let motion = decompose_essential(&estimate.matrix, &inliers, &params.intrinsics)?;
    Ok(PairMotion {
        motion,
        correspondences: cs.len(),
        inlier_ratio: estimate.inlier_ratio(),
    })
}

pub fn motion_from_analysis(analysis: &PairAnalysis, params: &PipelineParams) -> Result<PairMotion> {
    motion_from_flow(&analysis.flow, Some(&analysis.weights), params)
}

/// Relative motion of `frame_b` with respect to `frame_a` using default
/// RANSAC settings.
pub fn recover_motion(
    frame_a: &Image,
    frame_b: &Image,
    k: &CameraIntrinsics,
    normalization: NormalizationParams,
    flow_params: FlowParams,
    mode: PoseBackendMode,
) -> Result<RelativeMotion> {
    let params = PipelineParams {
        flow: flow_params,
        mode,
        ..PipelineParams::new(*k, normalization)
    };
    let analysis = analyze_pair(frame_a, frame_b, normalization, flow_params)?;
    Ok(motion_from_analysis(&analysis, &params)?.motion)
}

/// RANSAC seed for pair `index`, so a pair's result does not depend on which
/// worker handles it.
pub fn pair_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of one frame pair in a sequence run.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub index: usize,
    pub sigma: f64,
    pub weight_range: (f64, f64),
    /// `Err` holds the failure message; the pair then contributes an
    /// identity motion.
    pub result: std::result::Result<PairMotion, String>,
}

impl PairReport {
    pub fn motion(&self) -> RelativeMotion {
        self.result
            .as_ref()
            .map_or_else(|_| RelativeMotion::identity(), |m| m.motion)
    }
}

#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub trajectory: Trajectory,
    pub pairs: Vec<PairReport>,
}

impl SequenceRun {
    pub fn failures(&self) -> usize {
        self.pairs.iter().filter(|p| p.result.is_err()).count()
    }
}

/// Runs every consecutive pair and chains the motions. Per-pair geometry
/// failures become identity motions; other errors abort the run. Set
/// `baseline` to skip weighting entirely.
pub fn run_sequence(
    frames: &[Image],
    timestamps: &[f64],
    params: &PipelineParams,
    baseline: bool,
) -> Result<SequenceRun> {
    params.validate()?;
    if frames.len() < 2 {
        return Err(Error::param(format!(
            "need at least 2 frames, got {}",
            frames.len()
        )));
    }
    if timestamps.len() != frames.len() {
        return Err(Error::param(format!(
            "{} frames but {} timestamps",
            frames.len(),
            timestamps.len()
        )));
    }
    let (w, h) = frames[0].dims();
    params.intrinsics.check_image(w, h)?;

    let pairs = (0..frames.len() - 1)
        .into_par_iter()
        .map(|i| run_pair(i, &frames[i], &frames[i + 1], params, baseline))
        .collect::<Result<Vec<_>>>()?;
    for p in &pairs {
        match &p.result {
            Ok(m) => tracing::info!(
                pair = p.index,
                inlier_ratio = m.inlier_ratio,
                sigma = p.sigma,
                weight_min = p.weight_range.0,
                weight_max = p.weight_range.1,
                "pair ok"
            ),
            Err(e) => tracing::warn!(pair = p.index, error = %e, "pair failed, using identity motion"),
        }
    }
    let motions: Vec<RelativeMotion> = pairs.iter().map(PairReport::motion).collect();
    let trajectory = compose_trajectory(&motions, timestamps)?;
    Ok(SequenceRun { trajectory, pairs })
}

fn run_pair(
    index: usize,
    a: &Image,
    b: &Image,
    params: &PipelineParams,
    baseline: bool,
) -> Result<PairReport> {
    let pair_params = PipelineParams {
        ransac: RansacParams {
            seed: pair_seed(params.ransac.seed, index),
            ..params.ransac
        },
        ..*params
    };
    let analysis = analyze_pair(a, b, params.normalization, params.flow)?;
    let weights = (!baseline).then_some(&analysis.weights);
    let result = match motion_from_flow(&analysis.flow, weights, &pair_params) {
        Ok(m) => Ok(m),
        Err(
            e @ (Error::DegenerateInput(_)
            | Error::DegenerateGeometry(_)
            | Error::Cheirality { .. }
            | Error::RankDeficient(_)),
        ) => Err(e.to_string()),
        Err(e) => return Err(e),
    };
    Ok(PairReport {
        index,
        sigma: analysis.weights.sigma(),
        weight_range: analysis.weights.bounds(),
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{direction_angle_between, rotation_angle_between};
    use crate::synth::{generate, preset, SynthConfig};

    fn small_clear(frames: usize) -> SynthConfig {
        let mut c = preset("clear-01").unwrap();
        c.width = 160;
        c.height = 120;
        c.frames = frames;
        c.intrinsics = CameraIntrinsics::new(125.0, 125.0, 79.5, 59.5).unwrap();
        c
    }

    fn flow_params() -> FlowParams {
        FlowParams::new(3, 10, 15).unwrap()
    }

    #[test]
    fn pair_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| pair_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(pair_seed(42, 0), pair_seed(43, 0));
    }

    #[test]
    fn zero_alpha_matches_unweighted_baseline() {
        let ds = generate(&small_clear(2)).unwrap();
        let k = ds.config.intrinsics;
        for mode in [PoseBackendMode::ConfidenceWeighted, PoseBackendMode::ScaledFlow] {
            let params = PipelineParams {
                flow: flow_params(),
                mode,
                ..PipelineParams::new(k, NormalizationParams::disabled())
            };
            let analysis =
                analyze_pair(&ds.frames[0], &ds.frames[1], params.normalization, params.flow).unwrap();
            assert_eq!(analysis.weighted_flow().unwrap(), analysis.flow);
            let weighted = motion_from_analysis(&analysis, &params).unwrap();
            let baseline = motion_from_flow(&analysis.flow, None, &params).unwrap();
            assert_eq!(weighted, baseline);
        }
    }

    #[test]
    fn true_flow_recovers_motion() {
        let ds = generate(&small_clear(2)).unwrap();
        let k = ds.config.intrinsics;
        // Occluded pixels carry off-epipolar flow; a tight threshold drops them.
        let mut params = PipelineParams::new(k, NormalizationParams::disabled());
        params.ransac.threshold = 1e-7;
        let motion = motion_from_flow(&ds.flow[0].flow, None, &params).unwrap().motion;
        let truth = ds.trajectory.poses()[0].relative_to(&ds.trajectory.poses()[1]);
        let rot_err = rotation_angle_between(&motion.rotation(), &truth.rotation).to_degrees();
        let dir_err = direction_angle_between(&motion.translation(), &truth.translation.vector).to_degrees();
        assert!(rot_err < 0.01, "rotation error {rot_err} deg");
        assert!(dir_err < 0.1, "translation direction error {dir_err} deg");
    }

    #[test]
    fn clear_pair_produces_a_motion() {
        let ds = generate(&small_clear(2)).unwrap();
        let motion = recover_motion(
            &ds.frames[0],
            &ds.frames[1],
            &ds.config.intrinsics,
            NormalizationParams::new(0.25, 4.0).unwrap(),
            flow_params(),
            PoseBackendMode::ConfidenceWeighted,
        )
        .unwrap();
        assert!((motion.translation().norm() - 1.0).abs() < 1e-9);
        assert!(motion.rotation().angle().to_degrees() < 10.0);
    }

    #[test]
    fn identical_frames_fall_back_to_identity() {
        let ds = generate(&small_clear(1)).unwrap();
        let frames = vec![ds.frames[0].clone(), ds.frames[0].clone()];
        let params = PipelineParams {
            flow: flow_params(),
            ..PipelineParams::new(ds.config.intrinsics, NormalizationParams::disabled())
        };
        let run = run_sequence(&frames, &[0.0, 0.1], &params, false).unwrap();
        assert_eq!(run.failures(), 1);
        assert_eq!(run.trajectory.poses()[1].position(), nalgebra::Vector3::zeros());
    }

    #[test]
    fn run_sequence_is_independent_of_thread_count() {
        let ds = generate(&small_clear(4)).unwrap();
        let ts = ds.trajectory.timestamps();
        let params = PipelineParams {
            flow: flow_params(),
            ..PipelineParams::new(ds.config.intrinsics, NormalizationParams::new(0.25, 4.0).unwrap())
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_sequence(&ds.frames, &ts, &params, false).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.trajectory, four.trajectory);
        assert_eq!(one.pairs, four.pairs);
        assert_eq!(one.failures(), 0);
    }

    #[test]
    fn argument_errors() {
        let ds = generate(&small_clear(2)).unwrap();
        let params = PipelineParams::new(ds.config.intrinsics, NormalizationParams::disabled());
        assert!(run_sequence(&ds.frames[..1], &[0.0], &params, false).is_err());
        assert!(run_sequence(&ds.frames, &[0.0], &params, false).is_err());
        let bad = PipelineParams {
            sample_stride: 0,
            ..params
        };
        assert!(run_sequence(&ds.frames, &[0.0, 0.1], &bad, false).is_err());
    }
}
