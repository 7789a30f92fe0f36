//! Binary netpbm I/O: P5 grayscale in, P5/P6 out.
//!
//! Only 8-bit payloads (maxval 1..=255) are supported.

use crate::error::{Error, Result};
use crate::raster::{GrayImage, RgbImage};

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    payload_offset: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&b) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' || b == b'\r' {
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

    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (v, start))
            .ok_or_else(|| Error::parse(start, format!("{what} out of range")))
    }
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::parse(
            0,
            format!("expected magic {:?}", std::str::from_utf8(magic).unwrap()),
        ));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let (width, width_offset) = cur.number("width")?;
    let (height, _) = cur.number("height")?;
    let (maxval, maxval_offset) = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(width_offset, "zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(maxval_offset, format!("unsupported maxval {maxval}")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(Error::parse(cur.pos, "expected whitespace after maxval")),
    }
    Ok(Header {
        width,
        height,
        maxval,
        payload_offset: cur.pos + 1,
    })
}

fn payload<'a>(bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::parse(h.payload_offset, "image too large"))?;
    let end = h.payload_offset + need;
    if bytes.len() < end {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: need {need} bytes"),
        ));
    }
    let raw = &bytes[h.payload_offset..end];
    if let Some(i) = raw.iter().position(|&v| v as usize > h.maxval) {
        return Err(Error::parse(h.payload_offset + i, "sample exceeds maxval"));
    }
    Ok(raw)
}

/// Decodes a binary PGM. Intensities are `raw / maxval`.
pub fn load_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes, b"P5")?;
    let raw = payload(bytes, &h, 1)?;
    let scale = h.maxval as f64;
    GrayImage::new(h.width, h.height, raw.iter().map(|&v| v as f64 / scale).collect())
}

/// Encodes an image as 8-bit binary PGM, quantizing with `round(v * 255)`.
pub fn save_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn save_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

/// Decodes a binary PPM; samples are rescaled to 0..=255 when maxval differs.
pub fn load_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let h = parse_header(bytes, b"P6")?;
    let raw = payload(bytes, &h, 3)?;
    let data = if h.maxval == 255 {
        raw.to_vec()
    } else {
        raw.iter()
            .map(|&v| ((v as usize * 255 + h.maxval / 2) / h.maxval) as u8)
            .collect()
    };
    RgbImage::new(h.width, h.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loads_normalized_intensities() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend([0, 255, 128, 64]);
        let img = load_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn header_comments_and_small_maxval() {
        let mut bytes = b"P5\n# scanner output\n3 1\n# depth\n15\n".to_vec();
        bytes.extend([0, 15, 5]);
        let img = load_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 1.0 / 3.0]);
    }

    #[test]
    fn maxval_zero_is_rejected() {
        let bytes = b"P5 2 2 0\n\0\0\0\0".to_vec();
        match load_pgm(&bytes) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        assert!(matches!(
            load_pgm(b"P2 1 1 255\n0"),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(matches!(load_pgm(b"P5 x"), Err(Error::Parse { offset: 3, .. })));
        assert!(matches!(load_pgm(b"P5 1 1 65535\n\0\0"), Err(Error::Parse { .. })));
        match load_pgm(b"P5 2 2 255\n\x01\x02") {
            Err(Error::Parse { offset, reason }) => {
                assert_eq!(offset, 13);
                assert!(reason.contains("truncated"));
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn ppm_header_and_payload() {
        let blue = RgbImage::filled(1, 1, [0, 0, 255]);
        assert_eq!(save_ppm(&blue), b"P6\n1 1\n255\n\x00\x00\xff".to_vec());

        let rg = RgbImage::new(2, 1, vec![255, 0, 0, 0, 255, 0]).unwrap();
        let bytes = save_ppm(&rg);
        assert_eq!(&bytes[bytes.len() - 6..], &[255, 0, 0, 0, 255, 0]);
    }

    proptest! {
        #[test]
        fn pgm_round_trip_is_identity_on_quantized_values(
            (w, h, raw) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(any::<u8>(), w * h))
            })
        ) {
            let img = GrayImage::new(w, h, raw.iter().map(|&v| v as f64 / 255.0).collect()).unwrap();
            let bytes = save_pgm(&img);
            let back = load_pgm(&bytes).unwrap();
            prop_assert_eq!(back.to_u8(), raw.clone());
            prop_assert_eq!(&bytes[bytes.len() - raw.len()..], &raw[..]);
        }

        #[test]
        fn ppm_round_trip_is_identity(
            (w, h, raw) in (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(any::<u8>(), 3 * w * h))
            })
        ) {
            let img = RgbImage::new(w, h, raw).unwrap();
            prop_assert_eq!(load_ppm(&save_ppm(&img)).unwrap(), img);
        }
    }
}
