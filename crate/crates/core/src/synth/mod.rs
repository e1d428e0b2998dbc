//! Synthetic underwater sequences with ground truth.
//!
//! A pinhole camera flies over a procedurally textured seabed (the plane
//! `z = 0`, world z up). Each dataset carries the observed frames, the
//! clean radiance, per-pixel depth, per-frame transmission, reprojection
//! flow between consecutive frames and the camera trajectory.

mod dataset;
mod path;
mod render;

pub use dataset::{
    generate, load_dataset, preset, read_manifest, EmittedDataset, SynthConfig, SyntheticDataset,
    MANIFEST_FILE, PRESETS,
};
pub use path::{camera_orientation, CameraPath, MAX_STEP_ROTATION_DEG};
pub use render::{
    degrade_sequence, ground_truth_flow, render_frame, render_sequence, GroundTruthFlow, RenderedFrame, Scene,
};
