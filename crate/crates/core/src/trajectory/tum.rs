//! TUM text trajectories: `timestamp tx ty tz qx qy qz qw` per line.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{Pose, Trajectory};
use crate::error::{Error, Result};

/// Parses TUM text; blank lines and `#` comments are skipped. `source`
/// names the input in error messages.
pub fn parse_tum(reader: impl BufRead, source: &Path) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<f64> = trimmed
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| parse_err(format!("not a number: {tok:?}")))
            })
            .collect::<Result<_>>()?;
        if fields.len() != 8 {
            return Err(parse_err(format!("expected 8 fields, found {}", fields.len())));
        }
        if let Some(bad) = fields.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(format!("non-finite value {bad}")));
        }
        let q = Quaternion::new(fields[7], fields[4], fields[5], fields[6]);
        let norm = q.norm();
        if !(norm > 1e-6) {
            return Err(parse_err("zero-length quaternion".into()));
        }
        let pose = Pose::new(
            fields[0],
            UnitQuaternion::new_normalize(q),
            Vector3::new(fields[1], fields[2], fields[3]),
        )
        .map_err(|e| parse_err(e.to_string()))?;
        if let Some(prev) = poses.last().map(|p: &Pose| p.timestamp()) {
            if !(pose.timestamp() > prev) {
                return Err(parse_err(format!(
                    "timestamp {} does not increase (previous {prev})",
                    pose.timestamp()
                )));
            }
        }
        poses.push(pose);
    }
    Trajectory::new(poses)
}

pub fn load_tum(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tum(BufReader::new(file), path)
}

/// Writes every value in its shortest round-trip decimal form.
pub fn write_tum(w: &mut impl Write, t: &Trajectory) -> std::io::Result<()> {
    writeln!(w, "# timestamp tx ty tz qx qy qz qw")?;
    for p in t.poses() {
        let pos = p.position();
        let q = p.rotation();
        writeln!(
            w,
            "{} {} {} {} {} {} {} {}",
            p.timestamp(),
            pos.x,
            pos.y,
            pos.z,
            q.i,
            q.j,
            q.k,
            q.w
        )?;
    }
    Ok(())
}

pub fn save_tum(path: impl AsRef<Path>, t: &Trajectory) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut buf = Vec::new();
    write_tum(&mut buf, t).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
