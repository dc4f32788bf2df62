//! Binary PGM (P5) and PPM (P6) with 8- or 16-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image::{Image, ValueSpace};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'5' | b'6') {
        return Err(Error::Format("not a binary PGM/PPM file (expected P5 or P6)".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated or malformed PNM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("PNM header value out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("PNM header must end with a single whitespace byte".into()));
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PNM maxval {maxval}")));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

/// Decodes a P5 image into `Z_{maxval+1}` or a P6 image into `Z_{maxval+1}³`.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let grid = Grid::new(h.width, h.height)?;
    let channels = if h.magic[1] == b'5' { 1 } else { 3 };
    let wide = h.maxval > 255;
    let sample_bytes = if wide { 2 } else { 1 };
    let needed = grid.len() * channels * sample_bytes;
    let data = &bytes[h.data_start..];
    if data.len() < needed {
        return Err(Error::Format(format!(
            "PNM data truncated: expected {needed} bytes, found {}",
            data.len()
        )));
    }
    let levels = h.maxval + 1;
    let sample = |i: usize| -> Result<usize> {
        let v = if wide {
            u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as usize
        } else {
            data[i] as usize
        };
        if v > h.maxval {
            return Err(Error::Format(format!("sample {v} exceeds maxval {}", h.maxval)));
        }
        Ok(v)
    };
    let pixels = (0..grid.len())
        .map(|p| {
            let mut v = 0;
            for c in 0..channels {
                v = v * levels + sample(p * channels + c)?;
            }
            Ok(v as u32)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = ValueSpace::new(vec![levels; channels])?;
    Image::new(grid, values, pixels)
}

/// Encodes `Z_n` images as P5 and `Z_n³` images as P6 (`n ≤ 65536`).
pub fn encode_pnm(f: &Image) -> Result<Vec<u8>> {
    let factors = f.values().factors();
    let (magic, levels) = match factors {
        [n] => ("P5", *n),
        [a, b, c] if a == b && b == c => ("P6", *a),
        _ => {
            return Err(Error::Format(format!(
                "only Z_n and Z_n^3 value spaces can be written as PNM, got {factors:?}"
            )))
        }
    };
    if levels > 65536 {
        return Err(Error::Format(format!("unsupported pixel depth: {levels} levels")));
    }
    let maxval = levels - 1;
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", f.grid().width(), f.grid().height()).into_bytes();
    for &p in f.pixels() {
        for d in f.values().decode(p as usize) {
            if maxval > 255 {
                out.extend_from_slice(&(d as u16).to_be_bytes());
            } else {
                out.push(d as u8);
            }
        }
    }
    Ok(out)
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_pnm(path: &Path, f: &Image) -> Result<()> {
    super::write_atomic(path, &encode_pnm(f)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let grid = Grid::new(3, 2).unwrap();
        let y = ValueSpace::new(vec![256; 3]).unwrap();
        let f = Image::from_fn(grid, y, |p| (p.row * 7 + p.col * 1_000_003) % (1 << 24)).unwrap();
        let bytes = encode_pnm(&f).unwrap();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(decode_pnm(&bytes).unwrap(), f);
    }

    #[test]
    fn pgm_with_comments_and_16_bit() {
        let bytes = b"P5 # comment\n2 1\n# another\n1000\n\x03\xe7\x00\x05";
        let f = decode_pnm(bytes).unwrap();
        assert_eq!(f.values().size(), 1001);
        assert_eq!(f.pixels(), &[999, 5]);
        assert_eq!(decode_pnm(&encode_pnm(&f).unwrap()).unwrap(), f);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_pnm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pnm(b"P5\n1 1\n70000\n\x00\x00").is_err());
        let f = Image::constant(Grid::new(1, 1).unwrap(), ValueSpace::new(vec![8, 8]).unwrap(), 0).unwrap();
        assert!(encode_pnm(&f).is_err());
    }
}
