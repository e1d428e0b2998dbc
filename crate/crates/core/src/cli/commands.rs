use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{discover_sequence, load_frames, RunConfig};
use super::report::{axis_plot_svg, evaluate_named, format_csv, xy_plot_svg, EvalRow};
use crate::error::{Error, Result};
use crate::flow::{flow_epe, flow_to_color};
use crate::grid::Plane;
use crate::imaging::{AmbientLight, HazeParams, Image};
use crate::io;
use crate::pipeline::{analyze_pair, run_sequence, SequenceRun};
use crate::synth::{degrade_sequence, generate, SynthConfig};
use crate::trajectory::{load_tum, save_tum};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn check_same_size(paths: &[PathBuf], frames: &[Image]) -> Result<()> {
    let dims = frames[0].dims();
    match frames.iter().position(|f| f.dims() != dims) {
        Some(i) => Err(Error::param(format!(
            "{} is {}x{}, expected {}x{} like {}",
            paths[i].display(),
            frames[i].width(),
            frames[i].height(),
            dims.0,
            dims.1,
            paths[0].display()
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub pairs: usize,
    pub failures: usize,
    pub run: SequenceRun,
}

/// Runs the pipeline over a sequence and writes the trajectory (TUM) and,
/// optionally, a per-pair CSV log.
pub fn cmd_run(
    config: &RunConfig,
    sequence_dir: &Path,
    out_trajectory: &Path,
    log_csv: Option<&Path>,
    baseline: bool,
) -> Result<RunOutcome> {
    config.validate()?;
    let sequence = discover_sequence(sequence_dir, config)?;
    let intrinsics = config
        .intrinsics
        .or(sequence.manifest_intrinsics)
        .ok_or_else(|| {
            Error::param("no camera intrinsics: set [intrinsics] in the config (fx, fy, cx, cy)")
        })?;
    let frames = load_frames(&sequence.frame_paths)?;
    check_same_size(&sequence.frame_paths, &frames)?;
    let params = config.pipeline_params(intrinsics);
    tracing::info!(frames = frames.len(), ?params, "starting run");
    let run = run_sequence(&frames, &sequence.timestamps, &params, baseline)?;

    save_tum(out_trajectory, &run.trajectory)?;
    if let Some(path) = log_csv {
        let mut csv = String::from(
            "pair,frame_a,frame_b,status,correspondences,inlier_ratio,sigma,weight_min,weight_max,error\n",
        );
        for p in &run.pairs {
            let name = |i: usize| {
                sequence.frame_paths[i]
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            };
            let (status, corr, ratio, err) = match &p.result {
                Ok(m) => (
                    "ok",
                    m.correspondences.to_string(),
                    m.inlier_ratio.to_string(),
                    String::new(),
                ),
                Err(e) => ("failed", String::new(), String::new(), e.replace(',', ";")),
            };
            let _ = writeln!(
                csv,
                "{},{},{},{status},{corr},{ratio},{},{},{},{err}",
                p.index,
                name(p.index),
                name(p.index + 1),
                p.sigma,
                p.weight_range.0,
                p.weight_range.1
            );
        }
        write_text(path, &csv)?;
    }
    Ok(RunOutcome {
        pairs: run.pairs.len(),
        failures: run.failures(),
        run,
    })
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub reference: PathBuf,
    pub estimates: Vec<PathBuf>,
    pub delta_frames: usize,
    pub csv: Option<PathBuf>,
    pub plot_dir: Option<PathBuf>,
}

/// Scores each estimate against the reference. Rows are named after the
/// estimate file stems.
pub fn cmd_eval(options: &EvalOptions) -> Result<Vec<EvalRow>> {
    let reference = load_tum(&options.reference)?;
    let rows = options
        .estimates
        .iter()
        .map(|path| {
            let estimate = load_tum(path)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            evaluate_named(&name, &estimate, &reference, options.delta_frames)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = &options.csv {
        write_text(path, &format_csv(&rows))?;
    }
    if let Some(dir) = &options.plot_dir {
        create_dir(dir)?;
        write_text(&dir.join("trajectory_xy.svg"), &xy_plot_svg(&reference, &rows))?;
        for (axis, name) in ["x", "y", "z"].iter().enumerate() {
            write_text(
                &dir.join(format!("trajectory_{name}.svg")),
                &axis_plot_svg(&reference, &rows, axis),
            )?;
        }
    }
    Ok(rows)
}

/// Generates a dataset and writes it to `out_dir`.
pub fn cmd_synth(config: &SynthConfig, out_dir: &Path) -> Result<()> {
    let dataset = generate(config)?;
    dataset.emit(out_dir)
}

#[derive(Debug, Clone)]
pub enum DepthSource {
    /// PFM depth maps, matched to frames in sorted order.
    Directory(PathBuf),
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct DegradeOptions {
    pub input: PathBuf,
    pub output: PathBuf,
    pub attenuation: [f64; 3],
    pub ambient: [f64; 3],
    pub depth: DepthSource,
}

fn sorted_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| extensions.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Applies the haze model to every frame of `input`, keeping file names.
/// Returns the number of frames written.
pub fn cmd_degrade(options: &DegradeOptions) -> Result<usize> {
    let haze = HazeParams::new(options.attenuation, AmbientLight::new(options.ambient)?)?;
    let paths = sorted_files(&options.input, &["png", "ppm", "pgm"])?;
    if paths.is_empty() {
        return Err(Error::param(format!("no images in {}", options.input.display())));
    }
    let frames = load_frames(&paths)?;
    let depths: Vec<Plane> = match &options.depth {
        DepthSource::Constant(d) => {
            if !(*d > 0.0 && d.is_finite()) {
                return Err(Error::param(format!("depth must be > 0, got {d}")));
            }
            frames
                .iter()
                .map(|f| Plane::filled(f.width(), f.height(), *d))
                .collect()
        }
        DepthSource::Directory(dir) => {
            let depth_paths = sorted_files(dir, &["pfm"])?;
            if depth_paths.len() != paths.len() {
                return Err(Error::param(format!(
                    "{} holds {} depth maps for {} frames",
                    dir.display(),
                    depth_paths.len(),
                    paths.len()
                )));
            }
            depth_paths
                .iter()
                .map(|p| io::pfm::read(io::open(p)?).map_err(|e| e.with_path(p)))
                .collect::<Result<Vec<_>>>()?
        }
    };
    for (i, (f, d)) in frames.iter().zip(&depths).enumerate() {
        if f.dims() != d.dims() {
            return Err(Error::param(format!(
                "{} is {}x{} but its depth map is {}x{}",
                paths[i].display(),
                f.width(),
                f.height(),
                d.width(),
                d.height()
            )));
        }
    }
    let (observed, _) = degrade_sequence(&frames, &depths, &haze)?;
    create_dir(&options.output)?;
    for (path, img) in paths.iter().zip(&observed) {
        let name = path.file_name().expect("listed files have names");
        let mut out = options.output.join(name);
        if out.extension().is_some_and(|e| e == "pgm") {
            out.set_extension("ppm");
        }
        io::write_image(&out, img)?;
    }
    Ok(observed.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDebugReport {
    pub sigma: f64,
    pub weight_range: (f64, f64),
    pub mean_magnitude: f64,
    /// Endpoint error over all pixels against the supplied ground truth.
    pub epe: Option<f64>,
}

/// Writes `input.png`, `transmission.png`, `t_norm.png`, `flow.flo`,
/// `flow.png`, `weighted_flow.flo` and `weighted_flow.png`. Both flow
/// images share one colour scale.
pub fn cmd_flow_debug(
    frame_a: &Path,
    frame_b: &Path,
    config: &RunConfig,
    out_dir: &Path,
    truth: Option<&Path>,
) -> Result<FlowDebugReport> {
    config.validate()?;
    let a = io::read_image(frame_a)?;
    let b = io::read_image(frame_b)?;
    check_same_size(
        &[frame_a.to_path_buf(), frame_b.to_path_buf()],
        &[a.clone(), b.clone()],
    )?;
    let analysis = analyze_pair(&a, &b, config.normalization, config.flow)?;
    let weighted = analysis.weighted_flow()?;

    create_dir(out_dir)?;
    io::write_image(&out_dir.join("input.png"), &a)?;
    io::write_gray(
        &out_dir.join("transmission.png"),
        analysis.transmission.plane(),
        0.0,
        1.0,
    )?;
    let (lo, hi) = analysis.weights.bounds();
    io::write_gray(&out_dir.join("t_norm.png"), analysis.weights.plane(), lo, hi)?;
    write_bytes(&out_dir.join("flow.flo"), |w| io::flo::write(w, &analysis.flow))?;
    write_bytes(&out_dir.join("weighted_flow.flo"), |w| {
        io::flo::write(w, &weighted)
    })?;
    let scale = analysis
        .flow
        .magnitude()
        .min_max()
        .1
        .max(weighted.magnitude().min_max().1)
        .max(1e-9);
    io::write_image(&out_dir.join("flow.png"), &flow_to_color(&analysis.flow, scale))?;
    io::write_image(
        &out_dir.join("weighted_flow.png"),
        &flow_to_color(&weighted, scale),
    )?;

    let epe = match truth {
        Some(path) => {
            let gt = io::flo::read(io::open(path)?).map_err(|e| e.with_path(path))?;
            Some(flow_epe(&analysis.flow, &gt, None)?)
        }
        None => None,
    };
    let mags = analysis.flow.magnitude();
    Ok(FlowDebugReport {
        sigma: analysis.weights.sigma(),
        weight_range: analysis.weights.bounds(),
        mean_magnitude: mags.data().iter().sum::<f64>() / mags.data().len() as f64,
        epe,
    })
}
