//! End-to-end tests of the `wflow` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

use wflow_vo::flow::flow_epe;
use wflow_vo::grid::Plane;
use wflow_vo::imaging::{AmbientLight, HazeParams};
use wflow_vo::io;
use wflow_vo::synth::{degrade_sequence, generate, preset};

fn wflow(args: &[&str]) -> Output {
    wflow_env(args, &[])
}

fn wflow_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wflow"));
    cmd.args(args).env_remove("WFLOW_LOG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstderr: {}",
        o.status.code(),
        stderr(o)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Emits a short clear-01 sequence through the binary.
fn synth(dir: &Path, frames: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("seq{seed}"));
    let o = wflow(&[
        "synth",
        s(&out),
        "--preset",
        "clear-01",
        "--frames",
        &frames.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_ok(&o);
    out
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    v
}

fn digest(paths: &[PathBuf]) -> Vec<u8> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(std::fs::read(p).unwrap());
    }
    h.finalize().to_vec()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(wflow(&["--help"]).status.code(), Some(0));
    assert_eq!(wflow(&[]).status.code(), Some(1));
    assert_eq!(wflow(&["run"]).status.code(), Some(1));
    assert_eq!(
        wflow(&["run", "x", "-o", "y", "--mode", "other"]).status.code(),
        Some(1)
    );
}

#[test]
fn synth_is_reproducible_and_lists_presets() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), 3, 7);
    let b = dir.path().join("again");
    assert_ok(&wflow(&[
        "synth",
        s(&b),
        "--preset",
        "clear-01",
        "--frames",
        "3",
        "--seed",
        "7",
    ]));
    for sub in ["depth", "flow", "transmission", "frames"] {
        let (fa, fb) = (files_in(&a.join(sub)), files_in(&b.join(sub)));
        assert_eq!(fa.len(), fb.len());
        assert!(!fa.is_empty());
        assert_eq!(digest(&fa), digest(&fb), "{sub}");
    }

    let o = wflow(&["synth", s(&dir.path().join("bad")), "--preset", "murky-99"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("haze-heavy-01") && err.contains("clear-01"), "{err}");
}

#[test]
fn run_writes_trajectory_log_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), 5, 3);
    let (t1, t2, t3) = (
        dir.path().join("a.tum"),
        dir.path().join("b.tum"),
        dir.path().join("c.tum"),
    );
    let log = dir.path().join("log.csv");
    let o = wflow_env(
        &["run", s(&seq), "-o", s(&t1), "--log", s(&log), "--seed", "9"],
        &[("WFLOW_LOG", "info")],
    );
    assert_ok(&o);
    let err = stderr(&o);
    assert!(err.contains("inlier_ratio") && err.contains("sigma"), "{err}");
    assert!(err.contains("4 frame pairs"), "{err}");
    let csv = std::fs::read_to_string(&log).unwrap();
    assert!(csv
        .starts_with("pair,frame_a,frame_b,status,correspondences,inlier_ratio,sigma,weight_min,weight_max"));
    assert_eq!(csv.lines().count(), 5);

    let quiet = wflow(&["--workers", "1", "run", s(&seq), "-o", s(&t2), "--seed", "9"]);
    assert_ok(&quiet);
    assert!(!stderr(&quiet).contains("inlier_ratio"));
    assert_ok(&wflow(&[
        "--workers",
        "3",
        "run",
        s(&seq),
        "-o",
        s(&t3),
        "--seed",
        "9",
    ]));
    let bytes = std::fs::read(&t1).unwrap();
    assert_eq!(bytes, std::fs::read(&t2).unwrap());
    assert_eq!(bytes, std::fs::read(&t3).unwrap());
    assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 6);
}

#[test]
fn zero_alpha_run_equals_baseline_run() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), 4, 5);
    let (a, b) = (dir.path().join("alpha0.tum"), dir.path().join("baseline.tum"));
    assert_ok(&wflow(&["run", s(&seq), "-o", s(&a), "--alpha", "0"]));
    assert_ok(&wflow(&["run", s(&seq), "-o", s(&b), "--baseline"]));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn missing_frame_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), 4, 1);
    std::fs::remove_file(seq.join("frames/000002.png")).unwrap();
    let o = wflow(&["run", s(&seq), "-o", s(&dir.path().join("t.tum"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("000002.png"), "{}", stderr(&o));
}

#[test]
fn eval_reports_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), 6, 2);
    let reference = seq.join("groundtruth.tum");
    let csv = dir.path().join("eval.csv");
    let plots = dir.path().join("plots");
    let o = wflow(&[
        "eval",
        s(&reference),
        s(&reference),
        "--delta-frames",
        "2",
        "--csv",
        s(&csv),
        "--plot-dir",
        s(&plots),
    ]);
    assert_ok(&o);
    let table = stdout(&o);
    assert!(table.contains("ATE (m)"), "{table}");
    let row = std::fs::read_to_string(&csv).unwrap();
    let fields: Vec<&str> = row.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[0], "groundtruth");
    assert!(
        fields[3].parse::<f64>().unwrap().abs() < 1e-9,
        "ATE {}",
        fields[3]
    );
    assert!(
        fields[4].parse::<f64>().unwrap().abs() < 1e-9,
        "RTE {}",
        fields[4]
    );
    for name in [
        "trajectory_xy.svg",
        "trajectory_x.svg",
        "trajectory_y.svg",
        "trajectory_z.svg",
    ] {
        let svg = std::fs::read_to_string(plots.join(name)).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"), "{name}");
    }

    let text = std::fs::read_to_string(&reference).unwrap();
    let shifted: String = text
        .lines()
        .map(|l| match l.split_once(' ') {
            Some((t, rest)) if !l.starts_with('#') => {
                format!("{} {rest}\n", t.parse::<f64>().unwrap() + 100.0)
            }
            _ => format!("{l}\n"),
        })
        .collect();
    let far = dir.path().join("far.tum");
    std::fs::write(&far, shifted).unwrap();
    let o = wflow(&["eval", s(&reference), s(&far)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("match reference timestamps"),
        "{}",
        stderr(&o)
    );

    let broken = dir.path().join("broken.tum");
    std::fs::write(&broken, "# header\n0 0 0 0 0 0 0 1\n0.1 0 0 zero 0 0 0 1\n").unwrap();
    let o = wflow(&["eval", s(&reference), s(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("broken.tum:3:"), "{}", stderr(&o));
}

#[test]
fn degrade_matches_library_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = preset("clear-01").unwrap();
    config.frames = 3;
    let ds = generate(&config).unwrap();
    ds.emit(&dir.path().join("ds")).unwrap();
    let clean = dir.path().join("clean");
    std::fs::create_dir_all(&clean).unwrap();
    for (i, img) in ds.clean.iter().enumerate() {
        io::write_image(&clean.join(format!("{i:06}.png")), img).unwrap();
    }

    let same = dir.path().join("same");
    assert_ok(&wflow(&[
        "degrade",
        s(&clean),
        s(&same),
        "--attenuation",
        "0,0,0",
        "--ambient",
        "0.1,0.5,0.6",
        "--depth",
        "2.0",
    ]));
    for (a, b) in files_in(&clean).iter().zip(files_in(&same)) {
        assert_eq!(
            std::fs::read(a).unwrap(),
            std::fs::read(&b).unwrap(),
            "{}",
            b.display()
        );
    }

    let haze = config.haze;
    let [ar, ag, ab] = haze.attenuation();
    let [mr, mg, mb] = haze.ambient().rgb();
    let out = dir.path().join("hazy");
    let depth_dir = dir.path().join("ds/depth");
    assert_ok(&wflow(&[
        "degrade",
        s(&clean),
        s(&out),
        "--attenuation",
        &format!("{ar},{ag},{ab}"),
        "--ambient",
        &format!("{mr},{mg},{mb}"),
        "--depth-dir",
        s(&depth_dir),
    ]));
    let inputs: Vec<_> = files_in(&clean)
        .iter()
        .map(|p| io::read_image(p).unwrap())
        .collect();
    let depths: Vec<Plane> = files_in(&depth_dir)
        .iter()
        .map(|p| io::pfm::read(std::io::BufReader::new(std::fs::File::open(p).unwrap())).unwrap())
        .collect();
    let params = HazeParams::new([ar, ag, ab], AmbientLight::new([mr, mg, mb]).unwrap()).unwrap();
    let (expected, _) = degrade_sequence(&inputs, &depths, &params).unwrap();
    let reference = dir.path().join("expected");
    std::fs::create_dir_all(&reference).unwrap();
    for (i, img) in expected.iter().enumerate() {
        io::write_image(&reference.join(format!("{i:06}.png")), img).unwrap();
    }
    for (a, b) in files_in(&reference).iter().zip(files_in(&out)) {
        assert_eq!(
            std::fs::read(a).unwrap(),
            std::fs::read(&b).unwrap(),
            "{}",
            b.display()
        );
    }

    let o = wflow(&[
        "degrade",
        s(&clean),
        s(&dir.path().join("x")),
        "--attenuation",
        "1,1,1",
        "--ambient",
        "0.1,0.5,0.6",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--depth"), "{}", stderr(&o));
}

#[test]
fn flow_debug_panels_and_epe() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path(), 2, 4);
    let (a, b) = (seq.join("frames/000000.png"), seq.join("frames/000001.png"));
    let gt = seq.join("flow/000000.flo");

    let out = dir.path().join("debug");
    let o = wflow(&["flow-debug", s(&a), s(&b), "-o", s(&out), "--truth", s(&gt)]);
    assert_ok(&o);
    for name in [
        "input.png",
        "transmission.png",
        "t_norm.png",
        "flow.png",
        "weighted_flow.png",
        "flow.flo",
        "weighted_flow.flo",
    ] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let printed: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("EPE "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    let read_flo = |p: &Path| io::flo::read(std::fs::File::open(p).unwrap()).unwrap();
    let epe = flow_epe(&read_flo(&out.join("flow.flo")), &read_flo(&gt), None).unwrap();
    assert!((printed - epe).abs() < 1e-4, "printed {printed}, computed {epe}");

    let still = dir.path().join("still");
    assert_ok(&wflow(&["flow-debug", s(&a), s(&a), "-o", s(&still)]));
    let zero = read_flo(&still.join("flow.flo"));
    assert!(zero.u().data().iter().chain(zero.v().data()).all(|&v| v == 0.0));
    let img = io::read_image(&still.join("flow.png")).unwrap();
    let first = img.pixel(0, 0);
    assert!((0..img.height()).all(|y| (0..img.width()).all(|x| img.pixel(x, y) == first)));

    let plain = dir.path().join("plain");
    assert_ok(&wflow(&[
        "flow-debug",
        s(&a),
        s(&b),
        "-o",
        s(&plain),
        "--alpha",
        "0",
    ]));
    assert_eq!(
        std::fs::read(plain.join("flow.png")).unwrap(),
        std::fs::read(plain.join("weighted_flow.png")).unwrap()
    );
    assert_eq!(
        std::fs::read(plain.join("flow.flo")).unwrap(),
        std::fs::read(plain.join("weighted_flow.flo")).unwrap()
    );
}
