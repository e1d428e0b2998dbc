//! Middlebury `.flo`: magic `PIEH`, width and height as little-endian
//! `i32`, then row-major interleaved `(u, v)` little-endian `f32`.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::grid::Plane;

pub const MAGIC: &[u8; 4] = b"PIEH";

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        format: "flo",
        path: None,
        message: message.into(),
    }
}

pub fn write(w: &mut impl Write, flow: &FlowField) -> io::Result<()> {
    let (width, height) = flow.dims();
    w.write_all(MAGIC)?;
    w.write_all(&(width as i32).to_le_bytes())?;
    w.write_all(&(height as i32).to_le_bytes())?;
    let mut row = Vec::with_capacity(8 * width);
    for y in 0..height {
        row.clear();
        for x in 0..width {
            let (u, v) = flow.at(x, y);
            row.extend((u as f32).to_le_bytes());
            row.extend((v as f32).to_le_bytes());
        }
        w.write_all(&row)?;
    }
    Ok(())
}

pub fn read(mut r: impl Read) -> Result<FlowField> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| format_err("truncated header"))?;
    if &header[..4] != MAGIC {
        return Err(format_err(format!("bad magic {:?}", &header[..4])));
    }
    let width = i32::from_le_bytes(header[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(header[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 || (width as i64) * (height as i64) > 1 << 28 {
        return Err(format_err(format!("implausible size {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let mut raw = vec![0u8; 8 * width * height];
    r.read_exact(&mut raw)
        .map_err(|_| format_err("truncated flow data"))?;
    let mut u = Vec::with_capacity(width * height);
    let mut v = Vec::with_capacity(width * height);
    for px in raw.chunks_exact(8) {
        u.push(f32::from_le_bytes(px[..4].try_into().unwrap()) as f64);
        v.push(f32::from_le_bytes(px[4..].try_into().unwrap()) as f64);
    }
    FlowField::new(Plane::new(width, height, u), Plane::new(width, height, v))
        .map_err(|e| format_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_interleaved_row_major() {
        let flow = FlowField::new(
            Plane::new(2, 1, vec![1.0, 2.0]),
            Plane::new(2, 1, vec![-0.5, 0.25]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write(&mut buf, &flow).unwrap();
        let mut expect = b"PIEH".to_vec();
        expect.extend(2i32.to_le_bytes());
        expect.extend(1i32.to_le_bytes());
        for f in [1.0f32, -0.5, 2.0, 0.25] {
            expect.extend(f.to_le_bytes());
        }
        assert_eq!(buf, expect);
        assert_eq!(read(&buf[..]).unwrap(), flow);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read(&b"PIEX\x01\0\0\0\x01\0\0\0\0\0\0\0\0\0\0\0"[..]).is_err());
        assert!(read(&b"PIEH\x02\0\0\0\x01\0\0\0\0\0\0\0"[..]).is_err());
    }
}
