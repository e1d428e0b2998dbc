use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::CameraPath;
use super::render::{degrade_sequence, ground_truth_flow, render_sequence, GroundTruthFlow, Scene};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::geometry::CameraIntrinsics;
use crate::grid::Plane;
use crate::imaging::{AmbientLight, HazeParams, Image, TransmissionMap, MIN_IMAGE_SIDE};
use crate::io;
use crate::trajectory::{load_tum, save_tum, Trajectory};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &["haze-heavy-01", "clear-01"];

/// Largest camera translation per frame as a fraction of the frame's mean
/// depth.
const MAX_STEP_FRACTION: f64 = 0.2;

/// Everything needed to regenerate a dataset; stored as its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    /// Standard deviation of additive Gaussian sensor noise (0 disables).
    #[serde(default)]
    pub noise_sigma: f64,
    pub intrinsics: CameraIntrinsics,
    pub scene: Scene,
    pub haze: HazeParams,
    pub path: CameraPath,
}

impl SynthConfig {
    /// Same dataset with a different texture and noise seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scene.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_IMAGE_SIDE || self.height < MIN_IMAGE_SIDE {
            return Err(Error::param(format!(
                "{}x{} frames are too small",
                self.width, self.height
            )));
        }
        if self.frames == 0 {
            return Err(Error::param("a dataset needs at least one frame"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param(format!(
                "noise_sigma {} must be >= 0",
                self.noise_sigma
            )));
        }
        self.intrinsics.check_image(self.width, self.height)?;
        self.scene.validate()?;
        self.path.validate(self.frames)
    }
}

/// Bundled benchmark configurations.
pub fn preset(name: &str) -> Result<SynthConfig> {
    let intrinsics = CameraIntrinsics::new(250.0, 250.0, 159.5, 119.5)?;
    let ambient = AmbientLight::new([0.12, 0.5, 0.6])?;
    // Red attenuates fastest, blue slowest.
    let haze = |beta: f64| HazeParams::new([1.5 * beta, beta, 0.75 * beta], ambient);
    match name {
        "haze-heavy-01" => Ok(SynthConfig {
            name: name.into(),
            width: 320,
            height: 240,
            frames: 120,
            fps: 10.0,
            noise_sigma: 0.0,
            intrinsics,
            scene: Scene {
                seed: 1,
                albedo: [0.62, 0.56, 0.46],
                contrast: 0.5,
                feature_size: 0.5,
                octaves: 4,
                boulder_density: 0.6,
                boulder_cell: 1.0,
            },
            haze: haze(0.8)?,
            path: CameraPath::LawnMower {
                height: 1.2,
                pitch_deg: 35.0,
                speed: 0.06,
                leg_length: 1.5,
                turn_radius: 1.7,
            },
        }),
        "clear-01" => Ok(SynthConfig {
            name: name.into(),
            width: 320,
            height: 240,
            frames: 120,
            fps: 10.0,
            noise_sigma: 0.0,
            intrinsics,
            scene: Scene {
                seed: 2,
                albedo: [0.62, 0.56, 0.46],
                contrast: 1.0,
                feature_size: 0.5,
                octaves: 4,
                boulder_density: 0.6,
                boulder_cell: 1.0,
            },
            haze: haze(0.05)?,
            path: CameraPath::Arc {
                height: 1.2,
                pitch_deg: 35.0,
                speed: 0.06,
                yaw_rate_deg: 1.0,
            },
        }),
        other => Err(Error::param(format!(
            "unknown preset {other:?}; available: {}",
            PRESETS.join(", ")
        ))),
    }
}

/// In-memory dataset. `frames` are 8-bit quantized so that they equal what
/// a PNG save and reload produces.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SynthConfig,
    pub clean: Vec<Image>,
    pub frames: Vec<Image>,
    pub depth: Vec<Plane>,
    pub transmission: Vec<TransmissionMap>,
    /// Flow from frame `i` to frame `i + 1`.
    pub flow: Vec<GroundTruthFlow>,
    pub trajectory: Trajectory,
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let k = &config.intrinsics;
    let (rendered, trajectory) = render_sequence(
        &config.scene,
        &config.path,
        k,
        (config.width, config.height),
        config.frames,
        config.fps,
    )?;
    let (clean, depth): (Vec<Image>, Vec<Plane>) =
        rendered.into_iter().map(|r| (r.radiance, r.depth)).unzip();

    for (i, w) in trajectory.poses().windows(2).enumerate() {
        let step = (w[1].position() - w[0].position()).norm();
        let data = depth[i].data();
        let mean_depth = data.iter().sum::<f64>() / data.len() as f64;
        if step >= MAX_STEP_FRACTION * mean_depth {
            return Err(Error::param(format!(
                "camera moves {step:.3} m between frames {i} and {}, more than {MAX_STEP_FRACTION} of the mean depth {mean_depth:.3} m",
                i + 1
            )));
        }
    }

    let (observed, transmission) = degrade_sequence(&clean, &depth, &config.haze)?;
    let frames = observed
        .into_iter()
        .enumerate()
        .map(|(i, img)| {
            add_noise(img, config.noise_sigma, config.scene.seed, i as u64).map(|n| n.quantized())
        })
        .collect::<Result<Vec<_>>>()?;

    let poses = trajectory.poses();
    let flow = (0..config.frames.saturating_sub(1))
        .into_par_iter()
        .map(|i| ground_truth_flow(&config.scene, &poses[i], &poses[i + 1], &depth[i], k))
        .collect::<Result<Vec<_>>>()?;

    Ok(SyntheticDataset {
        config: config.clone(),
        clean,
        frames,
        depth,
        transmission,
        flow,
        trajectory,
    })
}

fn add_noise(img: Image, sigma: f64, seed: u64, frame: u64) -> Result<Image> {
    if sigma == 0.0 {
        return Ok(img);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    let planes: [Plane; 3] = std::array::from_fn(|c| img.channel(c).map(|v| v).clone());
    let [r, g, b] = planes.map(|p| {
        let (w, h) = p.dims();
        let data = p.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
        Plane::new(w, h, data)
    });
    Image::from_planes_clamped(r, g, b)
}

fn numbered(dir: &Path, sub: &str, i: usize, ext: &str) -> std::path::PathBuf {
    dir.join(sub).join(format!("{i:06}.{ext}"))
}

impl SyntheticDataset {
    /// Writes `frames/%06d.png`, `groundtruth.tum`, `flow/%06d.flo`,
    /// `transmission/%06d.pfm`, `depth/%06d.pfm` and the manifest.
    pub fn emit(&self, dir: &Path) -> Result<()> {
        for sub in ["frames", "flow", "transmission", "depth"] {
            let d = dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        self.frames
            .par_iter()
            .enumerate()
            .try_for_each(|(i, f)| io::write_image(&numbered(dir, "frames", i, "png"), f))?;
        for (i, t) in self.transmission.iter().enumerate() {
            write_with(&numbered(dir, "transmission", i, "pfm"), |w| {
                io::pfm::write(w, t.plane())
            })?;
        }
        for (i, d) in self.depth.iter().enumerate() {
            write_with(&numbered(dir, "depth", i, "pfm"), |w| io::pfm::write(w, d))?;
        }
        for (i, f) in self.flow.iter().enumerate() {
            write_with(&numbered(dir, "flow", i, "flo"), |w| io::flo::write(w, &f.flow))?;
        }
        save_tum(dir.join("groundtruth.tum"), &self.trajectory)?;
        let manifest = toml::to_string(&self.config)
            .map_err(|e| Error::param(format!("cannot serialize manifest: {e}")))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// A dataset read back from disk. Float arrays carry the f32 precision of
/// their file formats.
#[derive(Debug, Clone)]
pub struct EmittedDataset {
    pub config: SynthConfig,
    pub frames: Vec<Image>,
    pub depth: Vec<Plane>,
    pub transmission: Vec<Plane>,
    pub flow: Vec<FlowField>,
    pub trajectory: Trajectory,
}

pub fn read_manifest(dir: &Path) -> Result<SynthConfig> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::Format {
        format: "manifest",
        path: Some(path),
        message: e.to_string(),
    })
}

pub fn load_dataset(dir: &Path) -> Result<EmittedDataset> {
    let config = read_manifest(dir)?;
    let n = config.frames;
    let read_all = |sub: &str, ext: &str, count: usize| -> Vec<std::path::PathBuf> {
        (0..count).map(|i| numbered(dir, sub, i, ext)).collect()
    };
    let frames = read_all("frames", "png", n)
        .iter()
        .map(|p| io::read_image(p))
        .collect::<Result<Vec<_>>>()?;
    let read_pfm = |p: &std::path::PathBuf| -> Result<Plane> {
        io::pfm::read(std::io::BufReader::new(
            std::fs::File::open(p).map_err(|e| Error::io(p, e))?,
        ))
        .map_err(|e| e.with_path(p))
    };
    let depth = read_all("depth", "pfm", n)
        .iter()
        .map(read_pfm)
        .collect::<Result<Vec<_>>>()?;
    let transmission = read_all("transmission", "pfm", n)
        .iter()
        .map(read_pfm)
        .collect::<Result<Vec<_>>>()?;
    let flow = read_all("flow", "flo", n.saturating_sub(1))
        .iter()
        .map(|p| {
            io::flo::read(std::io::BufReader::new(
                std::fs::File::open(p).map_err(|e| Error::io(p, e))?,
            ))
            .map_err(|e| e.with_path(p))
        })
        .collect::<Result<Vec<_>>>()?;
    let trajectory = load_tum(dir.join("groundtruth.tum"))?;
    Ok(EmittedDataset {
        config,
        frames,
        depth,
        transmission,
        flow,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        let mut c = preset("clear-01").unwrap();
        c.width = 96;
        c.height = 72;
        c.frames = 4;
        c.intrinsics = CameraIntrinsics::new(75.0, 75.0, 47.5, 35.5).unwrap();
        c
    }

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!((c.width, c.height, c.frames), (320, 240, 120));
        }
        let err = preset("nope").unwrap_err().to_string();
        assert!(PRESETS.iter().all(|p| err.contains(p)), "{err}");
    }

    #[test]
    fn counts_and_determinism() {
        let c = small();
        let a = generate(&c).unwrap();
        assert_eq!(a.frames.len(), 4);
        assert_eq!(a.flow.len(), 3);
        assert_eq!(a.transmission.len(), 4);
        assert_eq!(a.trajectory.len(), 4);
        let b = generate(&c).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.flow, b.flow);
        let other = generate(&c.clone().with_seed(99)).unwrap();
        assert_ne!(a.frames[0], other.frames[0]);
    }

    #[test]
    fn noise_is_seeded() {
        let mut c = small();
        c.noise_sigma = 0.02;
        let a = generate(&c).unwrap();
        let b = generate(&c).unwrap();
        assert_eq!(a.frames, b.frames);
        c.noise_sigma = 0.0;
        assert_ne!(generate(&c).unwrap().frames, a.frames);
    }

    #[test]
    fn emit_and_load_roundtrip() {
        let ds = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.emit(dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.config, ds.config);
        assert_eq!(back.frames, ds.frames);
        let f32_round = |p: &Plane| p.map(|v| v as f32 as f64);
        for (a, b) in back.depth.iter().zip(&ds.depth) {
            assert_eq!(*a, f32_round(b));
        }
        for (a, b) in back.transmission.iter().zip(&ds.transmission) {
            assert_eq!(*a, f32_round(b.plane()));
        }
        for (a, b) in back.flow.iter().zip(&ds.flow) {
            assert_eq!(*a.u(), f32_round(b.flow.u()));
            assert_eq!(*a.v(), f32_round(b.flow.v()));
        }
        assert_eq!(back.trajectory.len(), ds.trajectory.len());
        for (a, b) in back.trajectory.poses().iter().zip(ds.trajectory.poses()) {
            assert_eq!(a.timestamp(), b.timestamp());
            assert!((a.position() - b.position()).norm() < 1e-12);
            assert!(a.rotation().angle_to(&b.rotation()) < 1e-12);
        }
    }

    #[test]
    fn too_fast_path_rejected() {
        let mut c = small();
        c.path = CameraPath::Arc {
            height: 1.2,
            pitch_deg: 50.0,
            speed: 0.6,
            yaw_rate_deg: 1.0,
        };
        assert!(generate(&c).is_err());
    }
}
