//! Pixel-value groups, images over them, and label functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};

/// A finite abelian group of pixel values, written as a product of cyclic
/// factors and flattened to a single index in `[0, |Y|)`.
///
/// The first factor is the most significant digit, so for `Z_8²` the pair
/// `(r, b)` has index `8 r + b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValueSpace {
    factors: Vec<usize>,
}

impl ValueSpace {
    pub fn new(factors: Vec<usize>) -> Result<Self> {
        if factors.is_empty() || factors.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "value space factors must be a non-empty list of positive moduli, got {factors:?}"
            )));
        }
        Ok(ValueSpace { factors })
    }

    /// The single cyclic group `Z_n`.
    pub fn cyclic(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    /// `|Y|`
    pub fn size(&self) -> usize {
        self.factors.iter().product()
    }

    pub fn encode(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.factors.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} value components, got {}",
                self.factors.len(),
                digits.len()
            )));
        }
        let mut index = 0;
        for (&d, &m) in digits.iter().zip(&self.factors) {
            if d >= m {
                return Err(Error::ValueOutOfRange { value: d, size: m });
            }
            index = index * m + d;
        }
        Ok(index)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.factors.len()];
        for (d, &m) in digits.iter_mut().zip(&self.factors).rev() {
            *d = index % m;
            index /= m;
        }
        digits
    }

    /// Group addition, factor by factor.
    pub fn add(&self, a: usize, b: usize) -> usize {
        let (da, db) = (self.decode(a), self.decode(b));
        let sum: Vec<usize> = da
            .iter()
            .zip(&db)
            .zip(&self.factors)
            .map(|((x, y), m)| (x + y) % m)
            .collect();
        self.encode(&sum).expect("sum stays in range")
    }

    pub fn neg(&self, a: usize) -> usize {
        let digits: Vec<usize> = self
            .decode(a)
            .iter()
            .zip(&self.factors)
            .map(|(x, m)| (m - x) % m)
            .collect();
        self.encode(&digits).expect("negation stays in range")
    }

    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.add(a, self.neg(b))
    }
}

/// An image `f : X → Y`, stored row-major as value indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    grid: Grid,
    values: ValueSpace,
    pixels: Vec<u32>,
}

impl Image {
    pub fn new(grid: Grid, values: ValueSpace, pixels: Vec<u32>) -> Result<Self> {
        if pixels.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} pixels for a {grid} grid, got {}",
                grid.len(),
                pixels.len()
            )));
        }
        let size = values.size();
        if let Some(&bad) = pixels.iter().find(|&&v| v as usize >= size) {
            return Err(Error::ValueOutOfRange {
                value: bad as usize,
                size,
            });
        }
        Ok(Image {
            grid,
            values,
            pixels,
        })
    }

    pub fn constant(grid: Grid, values: ValueSpace, value: usize) -> Result<Self> {
        Self::new(grid, values, vec![value as u32; grid.len()])
    }

    pub fn from_fn(
        grid: Grid,
        values: ValueSpace,
        mut f: impl FnMut(Point) -> usize,
    ) -> Result<Self> {
        let pixels = grid.points().map(|p| f(p) as u32).collect();
        Self::new(grid, values, pixels)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &ValueSpace {
        &self.values
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    pub fn get(&self, p: Point) -> usize {
        self.pixels[self.grid.index(p)] as usize
    }

    /// `T^s f`, i.e. `result(x) = f(x - s)` with cyclic wrap.
    pub fn translate(&self, shift: Point) -> Image {
        let shift = self.grid.wrap(shift.row as isize, shift.col as isize);
        let mut pixels = vec![0; self.pixels.len()];
        for (i, &v) in self.pixels.iter().enumerate() {
            pixels[self.grid.shift_index(i, shift)] = v;
        }
        Image {
            grid: self.grid,
            values: self.values.clone(),
            pixels,
        }
    }

    /// `f + c` in the value group.
    pub fn add_constant(&self, c: usize) -> Result<Image> {
        if c >= self.values.size() {
            return Err(Error::ValueOutOfRange {
                value: c,
                size: self.values.size(),
            });
        }
        let pixels = self
            .pixels
            .iter()
            .map(|&v| self.values.add(v as usize, c) as u32)
            .collect();
        Ok(Image {
            grid: self.grid,
            values: self.values.clone(),
            pixels,
        })
    }

    /// Applies an arbitrary value map `q : Y → Y'` pixelwise.
    pub fn map_values(&self, q: &ValueMap) -> Result<Image> {
        if q.source_size() != self.values.size() {
            return Err(Error::ValueSpaceMismatch {
                expected: q.source_size(),
                found: self.values.size(),
            });
        }
        let pixels = self.pixels.iter().map(|&v| q.apply(v as usize) as u32).collect();
        Image::new(self.grid, q.target().clone(), pixels)
    }

    /// Quantizes each value factor as described by `spec`.
    pub fn quantize(&self, spec: &Quantization) -> Result<Image> {
        self.map_values(&spec.value_map(&self.values)?)
    }

    /// Same pixels viewed in the cyclic group `Z_|Y|`, using the mixed-radix
    /// index of each value. Lets multi-factor images be stored as one channel.
    pub fn flatten(&self) -> Image {
        Image {
            grid: self.grid,
            values: ValueSpace::cyclic(self.values.size()).expect("nonempty value space"),
            pixels: self.pixels.clone(),
        }
    }
}

/// `translate_image`: free-function form of [`Image::translate`].
pub fn translate_image(f: &Image, shift: Point) -> Image {
    f.translate(shift)
}

/// `quantize_values`: free-function form of [`Image::quantize`].
pub fn quantize_values(f: &Image, spec: &Quantization) -> Result<Image> {
    f.quantize(spec)
}

/// What happens to one factor of the value space under quantization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorMap {
    /// Keep the factor, reducing it to this many levels via `floor(v * q / m)`.
    Keep(usize),
    /// Discard the factor entirely (e.g. the green channel of H&E images).
    Drop,
}

/// Per-factor quantization, e.g. `8,drop,8` for `Z_256³ → Z_8²`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantization {
    pub factors: Vec<FactorMap>,
}

impl Quantization {
    pub fn new(factors: Vec<FactorMap>) -> Self {
        Quantization { factors }
    }

    /// Parses `8,drop,8` style specs.
    pub fn parse(spec: &str) -> Result<Self> {
        let factors = spec
            .split(',')
            .map(|part| {
                let part = part.trim();
                if part.eq_ignore_ascii_case("drop") {
                    Ok(FactorMap::Drop)
                } else {
                    part.parse().map(FactorMap::Keep).map_err(|_| {
                        Error::InvalidQuantization(format!("bad factor `{part}` in `{spec}`"))
                    })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Quantization { factors })
    }

    pub fn target_space(&self, source: &ValueSpace) -> Result<ValueSpace> {
        if self.factors.len() != source.factors().len() {
            return Err(Error::InvalidQuantization(format!(
                "{} factor maps for a value space with {} factors",
                self.factors.len(),
                source.factors().len()
            )));
        }
        let mut kept = Vec::new();
        for (map, &orig) in self.factors.iter().zip(source.factors()) {
            if let FactorMap::Keep(q) = *map {
                if q == 0 || q > orig {
                    return Err(Error::InvalidQuantization(format!(
                        "cannot quantize Z_{orig} to Z_{q}"
                    )));
                }
                kept.push(q);
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidQuantization("every factor dropped".into()));
        }
        ValueSpace::new(kept)
    }

    /// Maps a single value, given as per-factor digits.
    pub fn apply_digits(&self, source: &ValueSpace, digits: &[usize]) -> Vec<usize> {
        self.factors
            .iter()
            .zip(source.factors())
            .zip(digits)
            .filter_map(|((map, &orig), &v)| match *map {
                FactorMap::Keep(q) => Some(v * q / orig),
                FactorMap::Drop => None,
            })
            .collect()
    }

    /// Tabulates the quantizer as a map `Y → Y'`.
    pub fn value_map(&self, source: &ValueSpace) -> Result<ValueMap> {
        let target = self.target_space(source)?;
        let table = (0..source.size())
            .map(|v| {
                let digits = self.apply_digits(source, &source.decode(v));
                target.encode(&digits).map(|t| t as u32)
            })
            .collect::<Result<_>>()?;
        ValueMap::new(table, target)
    }
}

/// A tabulated map `q : Y → Y'`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValueMap {
    table: Vec<u32>,
    target: ValueSpace,
}

impl ValueMap {
    pub fn new(table: Vec<u32>, target: ValueSpace) -> Result<Self> {
        let size = target.size();
        if let Some(&bad) = table.iter().find(|&&t| t as usize >= size) {
            return Err(Error::ValueOutOfRange {
                value: bad as usize,
                size,
            });
        }
        Ok(ValueMap { table, target })
    }

    pub fn identity(space: &ValueSpace) -> Self {
        ValueMap {
            table: (0..space.size() as u32).collect(),
            target: space.clone(),
        }
    }

    pub fn source_size(&self) -> usize {
        self.table.len()
    }

    pub fn target(&self) -> &ValueSpace {
        &self.target
    }

    pub fn apply(&self, v: usize) -> usize {
        self.table[v] as usize
    }
}

/// A label function `φ : X → Z_N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelMap {
    grid: Grid,
    num_labels: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(grid: Grid, num_labels: usize, labels: Vec<u32>) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::InvalidArgument("label maps need N >= 1".into()));
        }
        if labels.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} labels for a {grid} grid, got {}",
                grid.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_labels) {
            return Err(Error::LabelOutOfRange {
                label: bad as usize,
                num_labels,
            });
        }
        Ok(LabelMap {
            grid,
            num_labels,
            labels,
        })
    }

    pub fn constant(grid: Grid, num_labels: usize, label: usize) -> Result<Self> {
        Self::new(grid, num_labels, vec![label as u32; grid.len()])
    }

    pub fn from_fn(
        grid: Grid,
        num_labels: usize,
        mut f: impl FnMut(Point) -> usize,
    ) -> Result<Self> {
        let labels = grid.points().map(|p| f(p) as u32).collect();
        Self::new(grid, num_labels, labels)
    }

    /// Decodes the `index`-th element of `ℓ(X, Z_N)` in base-`N`
    /// little-endian order over the flat pixel index.
    pub fn nth(grid: Grid, num_labels: usize, mut index: u128) -> Self {
        let n = num_labels as u128;
        let labels = (0..grid.len())
            .map(|_| {
                let l = (index % n) as u32;
                index /= n;
                l
            })
            .collect();
        LabelMap {
            grid,
            num_labels,
            labels,
        }
    }

    pub(crate) fn from_raw(grid: Grid, num_labels: usize, labels: Vec<u32>) -> Self {
        debug_assert_eq!(labels.len(), grid.len());
        LabelMap {
            grid,
            num_labels,
            labels,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, p: Point) -> usize {
        self.labels[self.grid.index(p)] as usize
    }

    /// `|φ⁻¹{n}|`
    pub fn count(&self, label: usize) -> usize {
        self.labels.iter().filter(|&&l| l as usize == label).count()
    }

    /// `T^s φ`, i.e. `result(x) = φ(x - s)`.
    pub fn translate(&self, shift: Point) -> LabelMap {
        let shift = self.grid.wrap(shift.row as isize, shift.col as isize);
        let mut labels = vec![0; self.labels.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            labels[self.grid.shift_index(i, shift)] = l;
        }
        LabelMap::from_raw(self.grid, self.num_labels, labels)
    }

    /// Every distinct translate of this map, in order of first appearance
    /// when scanning shifts row-major.
    pub fn orbit(&self) -> Vec<LabelMap> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for s in self.grid.points() {
            let t = self.translate(s);
            if seen.insert(t.labels.clone()) {
                out.push(t);
            }
        }
        out
    }

    /// Reinterprets the same labels with a larger label count.
    pub fn with_num_labels(&self, num_labels: usize) -> Result<LabelMap> {
        LabelMap::new(self.grid, num_labels, self.labels.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb() -> ValueSpace {
        ValueSpace::new(vec![256, 256, 256]).unwrap()
    }

    #[test]
    fn encode_decode() {
        let y = ValueSpace::new(vec![8, 8]).unwrap();
        assert_eq!(y.size(), 64);
        assert_eq!(y.encode(&[3, 6]).unwrap(), 30);
        assert_eq!(y.decode(30), vec![3, 6]);
        assert_eq!(y.add(y.encode(&[7, 1]).unwrap(), y.encode(&[2, 7]).unwrap()), y.encode(&[1, 0]).unwrap());
    }

    #[test]
    fn quantize_white_maps_to_max() {
        let q = Quantization::parse("8,drop,8").unwrap();
        assert_eq!(q.apply_digits(&rgb(), &[255, 255, 255]), vec![7, 7]);
    }

    #[test]
    fn quantize_arithmetic() {
        let q = Quantization::parse("8,drop,8").unwrap();
        // floor(100*8/256) = 3, floor(200*8/256) = 6
        assert_eq!(q.apply_digits(&rgb(), &[100, 50, 200]), vec![3, 6]);
        let space = rgb();
        let g = Grid::new(1, 1).unwrap();
        let f = Image::new(g, space.clone(), vec![space.encode(&[100, 50, 200]).unwrap() as u32]).unwrap();
        let out = f.quantize(&q).unwrap();
        assert_eq!(out.values().factors(), &[8, 8]);
        assert_eq!(out.pixels(), &[30]);
    }

    #[test]
    fn identity_quantization() {
        let y = ValueSpace::new(vec![4, 3]).unwrap();
        let g = Grid::new(3, 2).unwrap();
        let f = Image::from_fn(g, y.clone(), |p| (p.row * 5 + p.col) % 12).unwrap();
        let q = Quantization::parse("4,3").unwrap();
        assert_eq!(f.quantize(&q).unwrap(), f);
    }

    #[test]
    fn quantize_rejects_finer_target() {
        let q = Quantization::parse("300,drop,8").unwrap();
        assert!(matches!(q.target_space(&rgb()), Err(Error::InvalidQuantization(_))));
        assert!(Quantization::parse("8,x,8").is_err());
    }

    #[test]
    fn translate_moves_rows_down() {
        let g = Grid::new(8, 6).unwrap();
        let f = Image::from_fn(g, ValueSpace::cyclic(5).unwrap(), |p| p.row % 5).unwrap();
        let t = f.translate(Point::new(1, 0));
        for p in g.points() {
            let src = g.sub(p, Point::new(1, 0));
            assert_eq!(t.get(p), f.get(src));
        }
        // the last row wraps around to the top
        assert_eq!(t.get(Point::new(0, 3)), f.get(Point::new(5, 3)));
        assert_eq!(f.translate(Point::ORIGIN), f);
    }

    #[test]
    fn orbit_of_checkerboard() {
        let g = Grid::new(2, 2).unwrap();
        let phi = LabelMap::new(g, 2, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(phi.orbit().len(), 2);
        let single = LabelMap::new(g, 2, vec![1, 0, 0, 0]).unwrap();
        assert_eq!(single.orbit().len(), 4);
    }

    #[test]
    fn label_validation() {
        let g = Grid::new(2, 1).unwrap();
        assert!(LabelMap::new(g, 2, vec![0, 2]).is_err());
        assert!(Image::new(g, ValueSpace::cyclic(2).unwrap(), vec![0]).is_err());
    }
}
