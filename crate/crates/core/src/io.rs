//! Binary PGM (P5) and the GMS1 raw container.
//!
//! GMS1 layout, little-endian throughout:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `GMS1`                            |
//! | 4      | 4    | width (u32)                             |
//! | 8      | 4    | height (u32)                            |
//! | 12     | 1    | element code: 0 u8, 1 u16, 2 f32, 3 f64 |
//! | 13     | ...  | row-major samples                       |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{DynImage, ElemType, Image, Pixel};
use crate::with_dyn_image;

pub const GMS1_MAGIC: &[u8; 4] = b"GMS1";
pub const GMS1_HEADER_LEN: usize = 13;

/// On-disk format family of an image file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Pgm,
    Gms1,
}

impl Format {
    /// Sniff the format from the leading magic bytes.
    pub fn detect(bytes: &[u8]) -> Result<Format> {
        if bytes.starts_with(b"P5") {
            Ok(Format::Pgm)
        } else if bytes.starts_with(GMS1_MAGIC) {
            Ok(Format::Gms1)
        } else {
            Err(Error::BadMagic(bytes.iter().take(4).copied().collect()))
        }
    }
}

/// Load either format, detected from the magic.
pub fn load(path: impl AsRef<Path>) -> Result<(DynImage, Format)> {
    let bytes = fs::read(path)?;
    let format = Format::detect(&bytes)?;
    let img = match format {
        Format::Pgm => decode_pgm(&bytes)?,
        Format::Gms1 => decode_raw(&bytes)?,
    };
    Ok((img, format))
}

/// Store in the given format family. PGM only carries unsigned samples.
pub fn store(img: &DynImage, format: Format, path: impl AsRef<Path>) -> Result<()> {
    let bytes = match format {
        Format::Pgm => encode_pgm(img)?,
        Format::Gms1 => encode_raw(img),
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<DynImage> {
    decode_pgm(&fs::read(path)?)
}

pub fn store_pgm(img: &DynImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(img)?)?;
    Ok(())
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<DynImage> {
    decode_raw(&fs::read(path)?)
}

pub fn store_raw(img: &DynImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_raw(img))?;
    Ok(())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
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
            return Err(Error::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<DynImage> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::BadMagic(bytes.iter().take(2).copied().collect()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension { width, height });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::MalformedHeader("no whitespace after maxval".into())),
    }
    let payload = &bytes[cur.pos..];
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    if maxval <= 255 {
        if payload.len() < n {
            return Err(Error::Truncated {
                expected: n,
                found: payload.len(),
            });
        }
        Ok(DynImage::U8(Image::from_vec(width, height, payload[..n].to_vec())?))
    } else {
        let expected = n * 2;
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: payload.len(),
            });
        }
        let samples = payload[..expected]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
            .collect();
        Ok(DynImage::U16(Image::from_vec(width, height, samples)?))
    }
}

pub fn encode_pgm(img: &DynImage) -> Result<Vec<u8>> {
    let (w, h) = img.dims();
    let mut out = Vec::new();
    match img {
        DynImage::U8(f) => {
            out.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
            out.extend(f.pixels());
        }
        DynImage::U16(f) => {
            out.extend_from_slice(format!("P5\n{w} {h}\n65535\n").as_bytes());
            for v in f.pixels() {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "PGM cannot store {} samples, use the raw container",
                other.elem()
            )))
        }
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<DynImage> {
    if bytes.len() < GMS1_HEADER_LEN {
        if !bytes.starts_with(&GMS1_MAGIC[..bytes.len().min(4)]) {
            return Err(Error::BadMagic(bytes.iter().take(4).copied().collect()));
        }
        return Err(Error::Truncated {
            expected: GMS1_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != GMS1_MAGIC {
        return Err(Error::BadMagic(bytes[..4].to_vec()));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let elem = ElemType::from_code(bytes[12])?;
    let payload = &bytes[GMS1_HEADER_LEN..];
    let expected = width * height * elem.size_bytes();
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    fn samples<T: Pixel>(w: usize, h: usize, payload: &[u8]) -> Result<Image<T>> {
        let size = T::ELEM.size_bytes();
        let v = payload.chunks_exact(size).map(T::read_le).collect();
        Image::from_vec(w, h, v)
    }
    Ok(match elem {
        ElemType::U8 => DynImage::U8(samples(width, height, payload)?),
        ElemType::U16 => DynImage::U16(samples(width, height, payload)?),
        ElemType::F32 => DynImage::F32(samples(width, height, payload)?),
        ElemType::F64 => DynImage::F64(samples(width, height, payload)?),
    })
}

pub fn encode_raw(img: &DynImage) -> Vec<u8> {
    let (w, h) = img.dims();
    let elem = img.elem();
    let mut out = Vec::with_capacity(GMS1_HEADER_LEN + w * h * elem.size_bytes());
    out.extend_from_slice(GMS1_MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.push(elem.code());
    with_dyn_image!(img, f => {
        for v in f.pixels() {
            v.write_le(&mut out);
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_minimal_u8() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        let img = decode_pgm(&bytes).unwrap();
        let DynImage::U8(f) = img else { panic!("expected u8") };
        assert_eq!(f.dims(), (2, 2));
        assert_eq!(f.to_vec(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn pgm_comments_in_header() {
        let mut bytes = b"P5\n# a comment\n3 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 8, 7]);
        let DynImage::U8(f) = decode_pgm(&bytes).unwrap() else { panic!() };
        assert_eq!(f.to_vec(), vec![9, 8, 7]);
    }

    #[test]
    fn pgm_sixteen_bit_is_big_endian() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0x02, 0xff, 0x00]);
        let DynImage::U16(f) = decode_pgm(&bytes).unwrap() else { panic!() };
        assert_eq!(f.to_vec(), vec![0x0102, 0xff00]);
    }

    #[test]
    fn pgm_errors() {
        assert!(matches!(decode_pgm(b"P2 1 1 255\n0"), Err(Error::BadMagic(_))));
        assert!(matches!(decode_pgm(b"P5 1 255\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            decode_pgm(b"P5 2 2 255\n\x01\x02"),
            Err(Error::Truncated { expected: 4, found: 2 })
        ));
        assert!(matches!(decode_pgm(b"P5 1 1 70000\n\0\0"), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn pgm_rejects_floats() {
        let f = DynImage::F32(Image::new_filled(1, 1, 0.5).unwrap());
        assert!(encode_pgm(&f).is_err());
    }

    #[test]
    fn raw_single_f64() {
        let f = DynImage::F64(Image::new_filled(1, 1, 1.5).unwrap());
        let bytes = encode_raw(&f);
        // 13-byte header + one 8-byte sample
        assert_eq!(bytes.len(), 21);
        assert_eq!(&bytes[..4], b"GMS1");
        assert_eq!(bytes[12], 3);
        assert_eq!(&bytes[13..], &1.5f64.to_le_bytes());
        assert_eq!(decode_raw(&bytes).unwrap(), f);
    }

    #[test]
    fn raw_errors() {
        let f = DynImage::U8(Image::new_filled(2, 2, 7).unwrap());
        let mut bytes = encode_raw(&f);
        bytes.pop();
        assert!(matches!(
            decode_raw(&bytes),
            Err(Error::Truncated { expected: 4, found: 3 })
        ));

        let mut bad = encode_raw(&f);
        bad[0] = b'X';
        assert!(matches!(decode_raw(&bad), Err(Error::BadMagic(_))));

        let mut bad = encode_raw(&f);
        bad[12] = 9;
        assert!(matches!(decode_raw(&bad), Err(Error::UnknownElemCode(9))));
    }

    #[test]
    fn format_detection() {
        assert_eq!(Format::detect(b"P5 1 1 255\n\0").unwrap(), Format::Pgm);
        assert_eq!(Format::detect(b"GMS1....").unwrap(), Format::Gms1);
        assert!(Format::detect(b"\x89PNG").is_err());
    }
}
