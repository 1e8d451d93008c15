//! Portable Float Map I/O for single-channel rasters.
//!
//! Header `Pf\n<W> <H>\n<scale>\n`, then `H` rows of `W` 32-bit floats, bottom row
//! first. A negative scale means little-endian payload, a positive one big-endian.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::path::Path;

fn raster_dims(raster: &Tensor) -> Result<(usize, usize)> {
    match raster.shape() {
        [1, h, w] | [1, 1, h, w] => Ok((*h, *w)),
        s => Err(Error::Shape(format!("PFM raster must be [1,H,W], got {s:?}"))),
    }
}

/// Encode a `[1,H,W]` raster as little-endian PFM bytes.
pub fn encode(raster: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = raster_dims(raster)?;
    if !raster.is_finite() {
        return Err(Error::NonFinite("PFM raster contains non-finite values".into()));
    }
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * h * w);
    let d = raster.data();
    for row in (0..h).rev() {
        for &v in &d[row * w..(row + 1) * w] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Pfm { offset: self.pos, reason: reason.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of header"));
        }
        std::str::from_utf8(&self.buf[start..self.pos]).map_err(|_| Error::Pfm { offset: start, reason: "non-ASCII header".into() })
    }
}

/// Decode PFM bytes into a `[1,H,W]` raster. Three-channel `PF` files are rejected.
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic = c.token()?;
    if magic != "Pf" {
        return Err(Error::Pfm { offset: 0, reason: format!("expected magic Pf, found {magic:?}") });
    }
    let mut dim = |name: &str| -> Result<usize> {
        let at = c.pos;
        let tok = c.token()?;
        tok.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::Pfm { offset: at, reason: format!("bad {name} {tok:?}") })
    };
    let w = dim("width")?;
    let h = dim("height")?;
    let at = c.pos;
    let scale_tok = c.token()?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::Pfm { offset: at, reason: format!("bad scale {scale_tok:?}") })?;
    // exactly one whitespace byte separates the header from the payload
    if c.pos >= bytes.len() || !bytes[c.pos].is_ascii_whitespace() {
        return Err(c.err("missing newline after scale"));
    }
    c.pos += 1;
    let need = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| c.err("raster too large"))?;
    let payload = &bytes[c.pos..];
    if payload.len() < need {
        return Err(Error::Pfm {
            offset: c.pos + payload.len(),
            reason: format!("truncated payload: need {need} bytes, have {}", payload.len()),
        });
    }
    let little = scale < 0.0;
    let mut data = vec![0.0; h * w];
    for (k, chunk) in payload[..need].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (k / w, k % w);
        data[(h - 1 - file_row) * w + col] = v as f64;
    }
    Tensor::new(&[1, h, w], data)
}

pub fn write(path: impl AsRef<Path>, raster: &Tensor) -> Result<()> {
    std::fs::write(path, encode(raster)?)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&std::fs::read(path)?)
}
