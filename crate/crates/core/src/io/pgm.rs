//! Binary 8-bit PGM (`P5`).

use crate::error::{Error, Result};

/// 8-bit grayscale raster, row-major as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u8,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(format!("PGM header: missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ASCII digits")
            .parse()
            .map_err(|_| Error::format(format!("PGM header: {what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format("not a binary PGM (expected P5 magic)"));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(format!("PGM has empty size {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(format!("PGM maxval {maxval} is not 8-bit")));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(Error::format("PGM header: missing separator before raster")),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format("PGM size overflows"))?;
    let raster = &bytes[h.pos..];
    if raster.len() != n {
        return Err(Error::format(format!(
            "PGM raster is {} bytes, {width}x{height} needs {n}",
            raster.len()
        )));
    }
    if let Some(&p) = raster.iter().find(|&&p| p as usize > maxval) {
        return Err(Error::format(format!("pixel value {p} exceeds maxval {maxval}")));
    }
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u8,
        pixels: raster.to_vec(),
    })
}

/// Canonical `P5` encoding: `"P5\n{w} {h}\n{maxval}\n"` followed by the raster.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Clamps to `[0, 1]` and rounds half up to 8 bits.
pub fn quantize(x: f64) -> u8 {
    let c = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    (c * 255.0 + 0.5).floor() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_comments() {
        let img = GrayImage {
            width: 3,
            height: 2,
            maxval: 255,
            pixels: vec![0, 1, 2, 253, 254, 255],
        };
        let b = encode_pgm(&img);
        assert_eq!(decode_pgm(&b).unwrap(), img);
        let mut commented = b"P5 # made by hand\n3 2\n# max\n255\n".to_vec();
        commented.extend_from_slice(&img.pixels);
        assert_eq!(decode_pgm(&commented).unwrap(), img);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 1\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n10\n\x0b").is_err());
        assert!(decode_pgm(b"P5\n0 1\n255\n").is_err());
        assert!(decode_pgm(b"P5\n99999999999999999999999 1\n255\n").is_err());
    }

    #[test]
    fn quantization() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(-1.0), 0);
        assert_eq!(quantize(2.0), 255);
        for v in 0..=255u8 {
            assert_eq!(quantize(v as f64 / 255.0), v);
        }
    }
}
