//! Binary cube and classifier files, label maps with palette sidecars.
//!
//! Cube layout (all integers and floats little-endian):
//!
//! ```text
//! "HISTCUBE"  u32 version=1  u32 reserved=0  u64 W  u64 H  u64 |Y|
//! f64 × (|Y| · H · W), level-major, rows within a level top to bottom
//! ```
//!
//! Classifier layout:
//!
//! ```text
//! "HCLF"  u32 version=1  u64 K  u64 |Y|
//! per class:  u8 mean_only  u64 N  u64 S  f64 × |Y| mean  f64 × S singular values
//!             f64 × (N · |Y|) directions, one after another
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::classifier::{ClassSubspace, SubspaceClassifier};
use crate::cube::HistCube;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image::{Image, LabelMap, ValueSpace};

use super::pnm::{decode_pnm, encode_pnm};
use super::write_atomic;

pub const CUBE_MAGIC: &[u8; 8] = b"HISTCUBE";
pub const CLASSIFIER_MAGIC: &[u8; 4] = b"HCLF";
const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("file truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format("dimension too large".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("dimension too large".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != VERSION {
        return Err(Error::Format(format!("unsupported format version {v}")));
    }
    Ok(())
}

pub fn encode_cube(cube: &HistCube) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + 8 * cube.data().len());
    out.extend_from_slice(CUBE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for d in [cube.grid().width(), cube.grid().height(), cube.num_levels()] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in cube.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a cube; the value space comes back as the cyclic group `Z_{|Y|}`.
pub fn decode_cube(bytes: &[u8]) -> Result<HistCube> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CUBE_MAGIC {
        return Err(Error::Format("not a histogram cube file".into()));
    }
    check_version(r.u32()?)?;
    r.u32()?;
    let (w, h, levels) = (r.u64()?, r.u64()?, r.u64()?);
    let grid = Grid::new(w, h)?;
    let data = r.f64s(grid.len().checked_mul(levels).ok_or_else(|| Error::Format("dimension too large".into()))?)?;
    r.finish()?;
    HistCube::from_data(grid, ValueSpace::cyclic(levels)?, data)
}

pub fn write_cube(path: &Path, cube: &HistCube) -> Result<()> {
    write_atomic(path, &encode_cube(cube))
}

pub fn read_cube(path: &Path) -> Result<HistCube> {
    decode_cube(&fs::read(path)?)
}

/// One 8-bit PGM per level (`level_0000.pgm`, ...), `v ↦ round(255 v)`.
pub fn write_level_stack(dir: &Path, cube: &HistCube) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let gray = ValueSpace::cyclic(256)?;
    (0..cube.num_levels())
        .map(|y| {
            let pixels = cube
                .level(y)
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u32)
                .collect();
            let img = Image::new(cube.grid(), gray.clone(), pixels)?;
            let path = dir.join(format!("level_{y:04}.pgm"));
            write_atomic(&path, &encode_pnm(&img)?)?;
            Ok(path)
        })
        .collect()
}

pub fn encode_classifier(clf: &SubspaceClassifier) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CLASSIFIER_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(clf.num_classes() as u64).to_le_bytes());
    out.extend_from_slice(&(clf.num_levels() as u64).to_le_bytes());
    let put = |vals: &[f64], out: &mut Vec<u8>| vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    for c in clf.classes() {
        out.push(u8::from(c.mean_only));
        out.extend_from_slice(&(c.num_components() as u64).to_le_bytes());
        out.extend_from_slice(&(c.singular_values.len() as u64).to_le_bytes());
        put(&c.mean, &mut out);
        put(&c.singular_values, &mut out);
        for u in &c.directions {
            put(u, &mut out);
        }
    }
    out
}

pub fn decode_classifier(bytes: &[u8]) -> Result<SubspaceClassifier> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CLASSIFIER_MAGIC {
        return Err(Error::Format("not a classifier file".into()));
    }
    check_version(r.u32()?)?;
    let (k, levels) = (r.u64()?, r.u64()?);
    let mut classes = Vec::with_capacity(k.min(1 << 16));
    for _ in 0..k {
        let mean_only = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad mean-only flag {b}"))),
        };
        let (n, s) = (r.u64()?, r.u64()?);
        let mean = r.f64s(levels)?;
        let singular_values = r.f64s(s)?;
        let directions = (0..n).map(|_| r.f64s(levels)).collect::<Result<_>>()?;
        classes.push(ClassSubspace {
            mean,
            directions,
            singular_values,
            mean_only,
        });
    }
    r.finish()?;
    SubspaceClassifier::new(levels, classes)
}

pub fn write_classifier(path: &Path, clf: &SubspaceClassifier) -> Result<()> {
    write_atomic(path, &encode_classifier(clf))
}

pub fn read_classifier(path: &Path) -> Result<SubspaceClassifier> {
    decode_classifier(&fs::read(path)?)
}

/// Display colors and names for labels, one line per label in the sidecar:
/// `label r g b name`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    pub entries: Vec<([u8; 3], String)>,
}

const DEFAULT_COLORS: [[u8; 3]; 8] = [
    [230, 230, 230],
    [200, 40, 40],
    [40, 90, 200],
    [240, 200, 40],
    [40, 160, 70],
    [150, 60, 170],
    [30, 180, 190],
    [120, 80, 40],
];

impl Palette {
    pub fn default_for(n: usize, names: &[String]) -> Self {
        let entries = (0..n)
            .map(|i| {
                let color = if i < DEFAULT_COLORS.len() {
                    DEFAULT_COLORS[i]
                } else {
                    let v = (i * 67 % 256) as u8;
                    [v, v.wrapping_mul(3), v.wrapping_mul(7)]
                };
                let name = names.get(i).cloned().unwrap_or_else(|| format!("class{i}"));
                (color, name)
            })
            .collect();
        Palette { entries }
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(_, n)| n.clone()).collect()
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, ([r, g, b], name))| format!("{i} {r} {g} {b} {name}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: &str| Error::Parse {
                line: line_no + 1,
                column: 1,
                message: message.into(),
            };
            let mut parts = line.split_whitespace();
            let label: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("expected a label index"))?;
            if label != entries.len() {
                return Err(bad("palette labels must be listed in order from 0"));
            }
            let mut color = [0u8; 3];
            for c in &mut color {
                *c = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("expected three 0-255 color values"))?;
            }
            let name = parts.collect::<Vec<_>>().join(" ");
            entries.push((color, if name.is_empty() { format!("class{label}") } else { name }));
        }
        Ok(Palette { entries })
    }

    /// A color rendering of `labels`.
    pub fn render(&self, labels: &LabelMap) -> Result<Image> {
        if labels.num_labels() > self.entries.len() {
            return Err(Error::LabelOutOfRange {
                label: labels.num_labels() - 1,
                num_labels: self.entries.len(),
            });
        }
        let rgb = ValueSpace::new(vec![256; 3])?;
        let pixels = labels
            .labels()
            .iter()
            .map(|&l| {
                let [r, g, b] = self.entries[l as usize].0;
                ((r as u32) << 16) | ((g as u32) << 8) | b as u32
            })
            .collect();
        Image::new(labels.grid(), rgb, pixels)
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".palette");
    PathBuf::from(s)
}

/// Writes labels as an 8-bit P5 (`maxval 255`, one byte per label) plus a
/// `<path>.palette` sidecar.
pub fn write_label_map(path: &Path, labels: &LabelMap, palette: &Palette) -> Result<()> {
    if labels.num_labels() > 256 {
        return Err(Error::Format(format!("{} labels do not fit in one byte", labels.num_labels())));
    }
    if palette.entries.len() != labels.num_labels() {
        return Err(Error::CountMismatch {
            expected: labels.num_labels(),
            found: palette.entries.len(),
        });
    }
    let img = Image::new(labels.grid(), ValueSpace::cyclic(256)?, labels.labels().to_vec())?;
    write_atomic(path, &encode_pnm(&img)?)?;
    write_atomic(&sidecar(path), palette.to_text().as_bytes())
}

pub fn read_palette(path: &Path) -> Result<Option<Palette>> {
    let side = sidecar(path);
    if !side.exists() {
        return Ok(None);
    }
    Ok(Some(Palette::parse(&fs::read_to_string(side)?)?))
}

/// Reads a label map; `N` comes from the palette sidecar when present and
/// from the largest label otherwise.
pub fn read_label_map(path: &Path) -> Result<(LabelMap, Option<Palette>)> {
    let img = decode_pnm(&fs::read(path)?)?;
    if img.values().factors().len() != 1 {
        return Err(Error::Format("label maps must be single-channel".into()));
    }
    let palette = read_palette(path)?;
    let n = match &palette {
        Some(p) => p.entries.len(),
        None => img.pixels().iter().max().map_or(1, |&m| m as usize + 1),
    };
    Ok((LabelMap::new(img.grid(), n, img.pixels().to_vec())?, palette))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_round_trip() {
        let grid = Grid::new(3, 2).unwrap();
        let data: Vec<f64> = (0..24).map(|i| i as f64 / 7.0).collect();
        let cube = HistCube::from_data(grid, ValueSpace::cyclic(4).unwrap(), data).unwrap();
        let bytes = encode_cube(&cube);
        assert_eq!(&bytes[..8], CUBE_MAGIC);
        assert_eq!(bytes.len(), 40 + 24 * 8);
        let back = decode_cube(&bytes).unwrap();
        assert_eq!(back.data(), cube.data());
        assert!(decode_cube(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn classifier_round_trip_is_bit_exact() {
        let c0 = ClassSubspace {
            mean: vec![0.1, 0.2, 0.7],
            directions: vec![vec![1.0 / 3f64.sqrt(); 3]],
            singular_values: vec![0.123_456_789],
            mean_only: false,
        };
        let c1 = ClassSubspace {
            mean: vec![1.0, 0.0, 0.0],
            directions: vec![],
            singular_values: vec![0.0, 0.0],
            mean_only: true,
        };
        let clf = SubspaceClassifier::new(3, vec![c0, c1]).unwrap();
        let back = decode_classifier(&encode_classifier(&clf)).unwrap();
        assert_eq!(back, clf);
    }

    #[test]
    fn palette_text_round_trip() {
        let p = Palette::default_for(3, &["Ca".into(), "Co".into(), "Ps".into()]);
        assert_eq!(Palette::parse(&p.to_text()).unwrap(), p);
        assert!(Palette::parse("1 0 0 0 x\n").is_err());
    }
}
