//! File formats: PNG / binary PGM-PPM images, PFM scalar maps and
//! Middlebury `.flo` flow fields.
//!
//! Images are quantized to 8 bits on save and divided by 255 on load.

pub mod flo;
pub mod pfm;
pub mod pnm;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Plane;
use crate::imaging::Image;

#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn finish(path: &Path, mut w: impl Write) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a PNG, PPM or PGM file. Gray inputs are replicated to all channels.
pub fn read_image(path: &Path) -> Result<Image> {
    match extension(path).as_str() {
        "ppm" | "pgm" | "pnm" => pnm::read(open(path)?).map_err(|e| e.with_path(path)),
        "png" => {
            let decoded = image::ImageReader::new(open(path)?)
                .with_guessed_format()
                .map_err(|e| Error::io(path, e))?
                .decode()
                .map_err(|e| Error::Format {
                    format: "png",
                    path: Some(path.to_path_buf()),
                    message: e.to_string(),
                })?
                .into_rgb8();
            let (w, h) = (decoded.width() as usize, decoded.height() as usize);
            let raw = decoded.into_raw();
            Image::from_fn(w, h, |x, y| {
                let i = 3 * (y * w + x);
                [0, 1, 2].map(|c| raw[i + c] as f64 / 255.0)
            })
        }
        other => Err(Error::param(format!(
            "unsupported image extension {other:?} for {}",
            path.display()
        ))),
    }
}

/// Saves an RGB image as PNG or PPM, chosen by extension.
pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let (w, h) = image.dims();
    let mut raw = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            raw.extend(image.pixel(x, y).map(to_u8));
        }
    }
    match extension(path).as_str() {
        "ppm" => {
            let mut out = create(path)?;
            pnm::write_rgb8(&mut out, w, h, &raw).map_err(|e| Error::io(path, e))?;
            finish(path, out)
        }
        "png" => write_png(path, w, h, &raw, image::ExtendedColorType::Rgb8),
        other => Err(Error::param(format!("unsupported image extension {other:?}"))),
    }
}

/// Saves a scalar plane as 8-bit gray (PNG or PGM), mapping `[lo, hi]`
/// linearly onto `[0, 255]`.
pub fn write_gray(path: &Path, plane: &Plane, lo: f64, hi: f64) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let raw: Vec<u8> = plane.data().iter().map(|&v| to_u8((v - lo) / span)).collect();
    let (w, h) = plane.dims();
    match extension(path).as_str() {
        "pgm" => {
            let mut out = create(path)?;
            pnm::write_gray8(&mut out, w, h, &raw).map_err(|e| Error::io(path, e))?;
            finish(path, out)
        }
        "png" => write_png(path, w, h, &raw, image::ExtendedColorType::L8),
        other => Err(Error::param(format!("unsupported gray extension {other:?}"))),
    }
}

pub(crate) fn write_png(
    path: &Path,
    w: usize,
    h: usize,
    raw: &[u8],
    color: image::ExtendedColorType,
) -> Result<()> {
    use image::ImageEncoder;
    let mut out = create(path)?;
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(raw, w as u32, h as u32, color)
        .map_err(|e| Error::Format {
            format: "png",
            path: Some(path.to_path_buf()),
            message: e.to_string(),
        })?;
    finish(path, out)
}

impl Error {
    pub(crate) fn with_path(self, path: &Path) -> Self {
        match self {
            Error::Format {
                format,
                path: None,
                message,
            } => Error::Format {
                format,
                path: Some(path.to_path_buf()),
                message,
            },
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_ppm_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(10, 9, |x, y| {
            [x as f64 / 9.0, y as f64 / 8.0, ((x * y) % 7) as f64 / 6.0]
        })
        .unwrap();
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            write_image(&p, &img).unwrap();
            let back = read_image(&p).unwrap();
            for c in 0..3 {
                for (a, b) in back.channel(c).data().iter().zip(img.channel(c).data()) {
                    assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
                }
            }
            assert_eq!(back, img.quantized());
        }
    }

    #[test]
    fn gray_pgm_reads_back_as_replicated_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.pgm");
        let plane = Plane::from_fn(8, 8, |x, _| x as f64 / 7.0);
        write_gray(&p, &plane, 0.0, 1.0).unwrap();
        let img = read_image(&p).unwrap();
        assert_eq!(img.pixel(7, 3), [1.0; 3]);
        assert_eq!(img.channel(0), img.channel(2));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_image(Path::new("/nonexistent/000001.png")).unwrap_err();
        assert!(err.to_string().contains("000001.png"));
    }
}
