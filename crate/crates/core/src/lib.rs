//! Attenuation-aware weighted optical flow for monocular visual odometry in
//! hazy and underwater imagery.
//!
//! The crate is organised as the pipeline runs:
//!
//! * [`imaging`]: haze formation model, dark-channel estimators and the
//!   transmission-to-weight normalization.
//! * [`flow`]: dense pyramidal Lucas–Kanade flow and flow weighting.
//! * [`geometry`]: weighted essential-matrix estimation and pose recovery.
//! * [`pipeline`]: the per-frame-pair composition of the above.
//! * [`trajectory`]: pose chaining, alignment and ATE/RTE metrics.
//! * [`synth`]: synthetic underwater sequences with ground truth.
//! * [`cli`]: the batch commands behind the `wflow` binary.

pub mod cli;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod imaging;
pub mod io;
pub mod pipeline;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
