//! Binary portable graymap (`P5`) and pixmap (`P6`) codec.
//!
//! Samples wider than 8 bits (maxval > 255) are two bytes, most significant
//! first. Comments (`#` to end of line) are accepted anywhere in the header.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// 1 for graymaps, 3 for pixmaps.
    pub channels: usize,
    /// Row-major samples, `channels` per pixel.
    pub samples: Vec<u16>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse("graymap", format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse("graymap", format!("{what} out of range")))
    }
}

/// Upper bound on pixel count accepted by the decoder.
pub const MAX_PIXELS: usize = 1 << 28;

pub fn decode(bytes: &[u8]) -> Result<PnmImage> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::parse("graymap", "missing P5/P6 magic")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse("graymap", "zero dimension"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::parse("graymap", format!("maxval {maxval} outside 1..=65535")));
    }
    let pixels = width
        .checked_mul(height)
        .filter(|&p| p <= MAX_PIXELS)
        .ok_or_else(|| Error::parse("graymap", "image too large"))?;
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::parse("graymap", "missing whitespace after maxval")),
    }
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let n_samples = pixels * channels;
    let raster = &bytes[cur.pos..];
    if raster.len() < n_samples * bytes_per_sample {
        return Err(Error::parse(
            "graymap",
            format!(
                "raster truncated: need {} bytes, have {}",
                n_samples * bytes_per_sample,
                raster.len()
            ),
        ));
    }
    let samples: Vec<u16> = if bytes_per_sample == 1 {
        raster[..n_samples].iter().map(|&b| u16::from(b)).collect()
    } else {
        raster[..n_samples * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(&bad) = samples.iter().find(|&&s| s > maxval as u16) {
        return Err(Error::parse("graymap", format!("sample {bad} exceeds maxval {maxval}")));
    }
    Ok(PnmImage {
        width,
        height,
        maxval: maxval as u16,
        channels,
        samples,
    })
}

pub fn encode(img: &PnmImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        for &s in &img.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(img.samples.iter().map(|&s| s as u8));
    }
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<PnmImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode(&bytes)
}

pub fn write(path: impl AsRef<Path>, img: &PnmImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(img)).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn decodes_header_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1 # trailing\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 200]);
        let img = decode(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.maxval, img.channels), (2, 1, 255, 1));
        assert_eq!(img.samples, vec![7, 200]);
    }

    #[test]
    fn sixteen_bit_samples_are_big_endian() {
        let mut bytes = b"P5 1 2 65535 ".to_vec();
        bytes.extend_from_slice(&[0x01, 0x02, 0xff, 0x00]);
        assert_eq!(decode(&bytes).unwrap().samples, vec![0x0102, 0xff00]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(decode(b"P2 1 1 255 0").is_err());
        assert!(decode(b"P5 0 1 255 ").is_err());
        assert!(decode(b"P5 2 2 255 \x00").is_err());
        assert!(decode(b"P5 1 1 0 \x00").is_err());
        assert!(decode(b"P5 1 1 70000 \x00\x00").is_err());
        assert!(decode(b"P5 1 1 10 \x0b").is_err());
        assert!(decode(b"P5 99999999999 99999999999 255 ").is_err());
        assert!(decode(b"P5 1 1 255").is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            w in 1usize..6, h in 1usize..6, rgb in any::<bool>(), wide in any::<bool>(),
            seed in prop::collection::vec(any::<u16>(), 108),
        ) {
            let channels = if rgb { 3 } else { 1 };
            let maxval: u16 = if wide { 65535 } else { 255 };
            let samples: Vec<u16> = seed[..w * h * channels].iter().map(|&s| (u32::from(s) % (u32::from(maxval) + 1)) as u16).collect();
            let img = PnmImage { width: w, height: h, maxval, channels, samples };
            prop_assert_eq!(decode(&encode(&img)).unwrap(), img);
        }
    }
}
