//! Binary PGM (`P5`) and PPM (`P6`) with 8-bit samples.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::imaging::Image;

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        format: "pnm",
        path: None,
        message: message.into(),
    }
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte).map_err(|e| Error::io("", e))? == 0 {
            return if tok.is_empty() {
                Err(format_err("truncated header"))
            } else {
                Ok(tok)
            };
        }
        match byte[0] {
            b'#' if tok.is_empty() => {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip).map_err(|e| Error::io("", e))?;
            }
            b if b.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    return Ok(tok);
                }
            }
            b => tok.push(b as char),
        }
    }
}

fn number(r: &mut impl BufRead, what: &str) -> Result<usize> {
    let t = token(r)?;
    t.parse()
        .map_err(|_| format_err(format!("bad {what} {t:?} in header")))
}

pub fn read(mut r: impl BufRead) -> Result<Image> {
    let magic = token(&mut r)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format_err(format!("unsupported magic {other:?}"))),
    };
    let w = number(&mut r, "width")?;
    let h = number(&mut r, "height")?;
    let maxval = number(&mut r, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format_err(format!("maxval {maxval} not in 1..=255")));
    }
    let mut raw = vec![0u8; w * h * channels];
    r.read_exact(&mut raw)
        .map_err(|_| format_err("truncated pixel data"))?;
    let scale = maxval as f64;
    Image::from_fn(w, h, |x, y| {
        let i = channels * (y * w + x);
        if channels == 1 {
            [raw[i] as f64 / scale; 3]
        } else {
            [0, 1, 2].map(|c| raw[i + c] as f64 / scale)
        }
    })
}

pub fn write_rgb8(w: &mut impl Write, width: usize, height: usize, raw: &[u8]) -> io::Result<()> {
    write!(w, "P6\n{width} {height}\n255\n")?;
    w.write_all(raw)
}

pub fn write_gray8(w: &mut impl Write, width: usize, height: usize, raw: &[u8]) -> io::Result<()> {
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comments_and_maxval() {
        let mut bytes = b"P5\n# made by hand\n8 8\n# another\n15\n".to_vec();
        bytes.extend(std::iter::repeat_n(15u8, 64));
        let img = read(&bytes[..]).unwrap();
        assert_eq!(img.pixel(3, 3), [1.0; 3]);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let mut bytes = b"P6 8 8 255\n".to_vec();
        bytes.extend([0u8; 10]);
        assert!(read(&bytes[..]).is_err());
        assert!(read(&b"P3 8 8 255\n"[..]).is_err());
    }
}
