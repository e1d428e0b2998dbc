//! Portable float map, single channel (`Pf`).
//!
//! Written little-endian (scale `-1.0`), scanlines bottom to top. Both byte
//! orders are accepted on read.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::Plane;

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        format: "pfm",
        path: None,
        message: message.into(),
    }
}

pub fn write(w: &mut impl Write, plane: &Plane) -> io::Result<()> {
    let (width, height) = plane.dims();
    write!(w, "Pf\n{width} {height}\n-1.0\n")?;
    for y in (0..height).rev() {
        for x in 0..width {
            w.write_all(&(plane.get(x, y) as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn line(r: &mut impl BufRead) -> Result<String> {
    let mut s = String::new();
    r.read_line(&mut s).map_err(|e| Error::io("", e))?;
    if s.is_empty() {
        return Err(format_err("truncated header"));
    }
    Ok(s.trim().to_string())
}

pub fn read(mut r: impl BufRead) -> Result<Plane> {
    let magic = line(&mut r)?;
    if magic != "Pf" {
        return Err(format_err(format!(
            "expected single-channel \"Pf\", got {magic:?}"
        )));
    }
    let dims = line(&mut r)?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (width, height) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) => (w, h),
        _ => return Err(format_err(format!("bad dimensions line {dims:?}"))),
    };
    let scale: f64 = line(&mut r)?.parse().map_err(|_| format_err("bad scale line"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err("scale must be non-zero"));
    }
    let little = scale < 0.0;
    let mut raw = vec![0u8; 4 * width * height];
    r.read_exact(&mut raw)
        .map_err(|_| format_err("truncated sample data"))?;
    let mut data = vec![0.0; width * height];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let (x, row_from_bottom) = (i % width, i / width);
        data[(height - 1 - row_from_bottom) * width + x] = v as f64;
    }
    Ok(Plane::new(width, height, data))
}
