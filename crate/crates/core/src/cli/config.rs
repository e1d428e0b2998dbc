use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::geometry::{CameraIntrinsics, PoseBackendMode, RansacParams};
use crate::imaging::NormalizationParams;
use crate::io;
use crate::pipeline::{PipelineParams, DEFAULT_SAMPLE_STRIDE};
use crate::synth::{read_manifest, MANIFEST_FILE};

/// File with one timestamp (seconds) per frame, looked up in the sequence
/// directory.
pub const TIMESTAMPS_FILE: &str = "timestamps.txt";

/// Which files of a sequence directory are frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSelection {
    /// Shell-style pattern on file names.
    pub pattern: String,
    /// Index of the first frame (after sorting) to use.
    pub first: usize,
    /// Number of frames to use; all remaining when absent.
    pub count: Option<usize>,
}

impl Default for FrameSelection {
    fn default() -> Self {
        Self {
            pattern: "*.{png,ppm,pgm}".into(),
            first: 0,
            count: None,
        }
    }
}

/// Configuration of `wflow run`, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Taken from the sequence's synthetic-dataset manifest when absent.
    #[serde(default)]
    pub intrinsics: Option<CameraIntrinsics>,
    #[serde(default = "default_normalization")]
    pub normalization: NormalizationParams,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub ransac: RansacParams,
    #[serde(default)]
    pub mode: PoseBackendMode,
    /// Spacing of the flow samples fed to the pose solver, pixels.
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    /// Frame rate used for timestamps when the sequence has neither a
    /// timestamps file nor a manifest.
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub frames: FrameSelection,
}

fn default_normalization() -> NormalizationParams {
    NormalizationParams::new(0.25, 4.0).expect("valid defaults")
}

fn default_stride() -> usize {
    DEFAULT_SAMPLE_STRIDE
}

fn default_fps() -> f64 {
    10.0
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            intrinsics: None,
            normalization: default_normalization(),
            flow: FlowParams::default(),
            ransac: RansacParams::default(),
            mode: PoseBackendMode::default(),
            sample_stride: default_stride(),
            fps: default_fps(),
            frames: FrameSelection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Format {
            format: "config",
            path: Some(source.to_path_buf()),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that does not depend on the frames themselves.
    pub fn validate(&self) -> Result<()> {
        self.ransac.validate()?;
        if self.sample_stride < 1 {
            return Err(Error::param("sample_stride must be >= 1"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::param(format!("fps must be > 0, got {}", self.fps)));
        }
        if self.frames.count == Some(0) || self.frames.count == Some(1) {
            return Err(Error::param("frames.count must be at least 2"));
        }
        glob::Pattern::new(&expand_braces(&self.frames.pattern)[0])
            .map_err(|e| Error::param(format!("bad frame pattern {:?}: {e}", self.frames.pattern)))?;
        Ok(())
    }

    pub fn pipeline_params(&self, intrinsics: CameraIntrinsics) -> PipelineParams {
        PipelineParams {
            intrinsics,
            normalization: self.normalization,
            flow: self.flow,
            ransac: self.ransac,
            mode: self.mode,
            sample_stride: self.sample_stride,
        }
    }
}

/// `a{b,c}d` → `[abd, acd]`; one brace group at most.
fn expand_braces(pattern: &str) -> Vec<String> {
    match (pattern.find('{'), pattern.find('}')) {
        (Some(open), Some(close)) if open < close => pattern[open + 1..close]
            .split(',')
            .map(|alt| format!("{}{alt}{}", &pattern[..open], &pattern[close + 1..]))
            .collect(),
        _ => vec![pattern.to_string()],
    }
}

/// Frames of a sequence with their timestamps.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub frame_paths: Vec<PathBuf>,
    pub timestamps: Vec<f64>,
    /// Intrinsics from a synthetic-dataset manifest, if the directory has one.
    pub manifest_intrinsics: Option<CameraIntrinsics>,
}

/// Lists the selected frames of `dir` in lexicographic order. A `frames`
/// subdirectory, when present, holds the images.
pub fn discover_sequence(dir: &Path, config: &RunConfig) -> Result<Sequence> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "sequence directory not found"),
        ));
    }
    let image_dir = if dir.join("frames").is_dir() {
        dir.join("frames")
    } else {
        dir.to_path_buf()
    };
    let patterns: Vec<glob::Pattern> = expand_braces(&config.frames.pattern)
        .iter()
        .map(|p| glob::Pattern::new(p))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::param(format!("bad frame pattern: {e}")))?;
    let mut all: Vec<PathBuf> = std::fs::read_dir(&image_dir)
        .map_err(|e| Error::io(&image_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| patterns.iter().any(|pat| pat.matches(n)))
        })
        .collect();
    all.sort();
    let total = all.len();

    let manifest = if dir.join(MANIFEST_FILE).is_file() {
        Some(read_manifest(dir)?)
    } else {
        None
    };
    check_numbering(&all, manifest.as_ref().map(|m| m.frames))?;
    let all_timestamps = if dir.join(TIMESTAMPS_FILE).is_file() {
        let ts = read_timestamps(&dir.join(TIMESTAMPS_FILE))?;
        if ts.len() != total {
            return Err(Error::param(format!(
                "{} lists {} timestamps for {total} frames",
                dir.join(TIMESTAMPS_FILE).display(),
                ts.len()
            )));
        }
        ts
    } else {
        let fps = manifest.as_ref().map_or(config.fps, |m| m.fps);
        (0..total).map(|i| i as f64 / fps).collect()
    };

    let first = config.frames.first;
    let end = config.frames.count.map_or(total, |c| (first + c).min(total));
    if end < first + 2 {
        return Err(Error::param(format!(
            "{} holds {total} matching frames; frames {first}.. leave fewer than 2",
            image_dir.display()
        )));
    }
    Ok(Sequence {
        frame_paths: all[first..end].to_vec(),
        timestamps: all_timestamps[first..end].to_vec(),
        manifest_intrinsics: manifest.map(|m| m.intrinsics),
    })
}

/// For frames named by number (`000012.png`), reports the first number
/// missing from the run, or from `0..expected` when the count is known.
fn check_numbering(paths: &[PathBuf], expected: Option<usize>) -> Result<()> {
    let Some(first) = paths.first() else {
        return Ok(());
    };
    let stem = |p: &Path| p.file_stem().and_then(|s| s.to_str()).map(str::to_owned);
    let numbers: Option<Vec<usize>> = paths
        .iter()
        .map(|p| {
            stem(p)
                .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|s| s.parse().ok())
        })
        .collect();
    let Some(numbers) = numbers else {
        return Ok(());
    };
    let width = stem(first).map_or(0, |s| s.len());
    let ext = first.extension().and_then(|e| e.to_str()).unwrap_or("png");
    let start = if expected.is_some() { 0 } else { numbers[0] };
    let end = expected.map_or(numbers[numbers.len() - 1] + 1, |n| n.max(numbers.len()));
    let mut present = numbers.iter().copied().peekable();
    for n in start..end {
        while present.next_if(|&m| m < n).is_some() {}
        if present.next_if_eq(&n).is_none() {
            let path = first.with_file_name(format!("{n:0width$}.{ext}"));
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "frame missing from the sequence"),
            ));
        }
    }
    Ok(())
}

fn read_timestamps(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads every frame, failing on the first unreadable one.
pub fn load_frames(paths: &[PathBuf]) -> Result<Vec<crate::imaging::Image>> {
    paths.iter().map(|p| io::read_image(p)).collect()
}
