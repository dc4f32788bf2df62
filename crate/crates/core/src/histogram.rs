//! The local histogram transform
//!
//! `LH_w f(x, y) = Σ_{x'} w(x') δ_y(f(x + x'))`
//!
//! computed one value level at a time as the correlation of the level set
//! indicator `1_{f⁻¹{y}}` with `w` (equivalently, convolution with the
//! reversed window `w̃`). Three filters are provided:
//!
//! * [`FilterMode::Direct`]: scatter each pixel of the level set through the
//!   window taps, `O(|X| · taps)` over all levels combined.
//! * [`FilterMode::CyclicFft`]: per-level FFT correlation sharing one transform
//!   of `w`; two real levels are packed into each complex transform.
//! * [`FilterMode::Noncyclic`]: taps falling off the image are dropped and each
//!   pixel is renormalized by the window mass that stayed inside.
//!
//! [`FilterMode::Auto`] picks direct or FFT by window support size.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::HistCube;
use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::grid::{Grid, Offset, Point};
use crate::image::{Image, ValueMap};
use crate::window::WeightingFunction;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Cyclic; direct below the FFT threshold, FFT at or above it.
    #[default]
    Auto,
    Direct,
    CyclicFft,
    Noncyclic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterPlan {
    pub mode: FilterMode,
    /// Window support size (number of nonzero taps) from which `Auto` uses the FFT.
    pub fft_threshold: usize,
}

impl Default for FilterPlan {
    fn default() -> Self {
        FilterPlan {
            mode: FilterMode::Auto,
            fft_threshold: 49,
        }
    }
}

impl FilterPlan {
    pub fn new(mode: FilterMode) -> Self {
        FilterPlan {
            mode,
            ..Default::default()
        }
    }

    pub fn direct() -> Self {
        Self::new(FilterMode::Direct)
    }

    pub fn fft() -> Self {
        Self::new(FilterMode::CyclicFft)
    }

    pub fn noncyclic() -> Self {
        Self::new(FilterMode::Noncyclic)
    }

    /// The concrete filter used for a given window.
    pub fn resolve(&self, w: &WeightingFunction) -> FilterMode {
        match self.mode {
            FilterMode::Auto if w.support_size() < self.fft_threshold => FilterMode::Direct,
            FilterMode::Auto => FilterMode::CyclicFft,
            m => m,
        }
    }

    pub fn is_cyclic(&self) -> bool {
        self.mode != FilterMode::Noncyclic
    }
}

/// Pixel indices grouped by value, in ascending pixel order within each value.
struct LevelSets {
    starts: Vec<usize>,
    pixels: Vec<u32>,
}

impl LevelSets {
    fn new(f: &Image) -> Self {
        let size = f.values().size();
        let mut starts = vec![0usize; size + 1];
        for &v in f.pixels() {
            starts[v as usize + 1] += 1;
        }
        for y in 0..size {
            starts[y + 1] += starts[y];
        }
        let mut cursor = starts.clone();
        let mut pixels = vec![0u32; f.pixels().len()];
        for (i, &v) in f.pixels().iter().enumerate() {
            pixels[cursor[v as usize]] = i as u32;
            cursor[v as usize] += 1;
        }
        LevelSets { starts, pixels }
    }

    fn level(&self, y: usize) -> &[u32] {
        &self.pixels[self.starts[y]..self.starts[y + 1]]
    }
}

enum Kernel {
    Direct {
        /// Taps as grid points `x'`; pixel `p` feeds `x = p - x'`.
        taps: Vec<(Point, f64)>,
    },
    Fft {
        fft: Fft2d,
        /// `conj(FFT(w))`, the spectrum of `w̃`.
        spectrum: Vec<Complex64>,
    },
    Noncyclic {
        taps: Vec<(Offset, f64)>,
        mass: Vec<f64>,
    },
}

/// A prepared per-level filter for one image and window.
///
/// Building it costs one pass over the image (plus one FFT of the window for
/// the FFT path); afterwards any level plane can be produced independently,
/// from any thread.
pub struct LevelFilter<'a> {
    image: &'a Image,
    sets: LevelSets,
    kernel: Kernel,
}

impl<'a> LevelFilter<'a> {
    pub fn new(f: &'a Image, w: &WeightingFunction, plan: &FilterPlan) -> Result<Self> {
        let grid = f.grid();
        grid.check_same(&w.grid())?;
        let kernel = match plan.resolve(w) {
            FilterMode::Direct | FilterMode::Auto => Kernel::Direct {
                taps: w
                    .taps()
                    .iter()
                    .map(|&(o, wt)| (grid.offset_point(o), wt))
                    .collect(),
            },
            FilterMode::CyclicFft => {
                let fft = Fft2d::new(grid.width(), grid.height());
                let mut spectrum: Vec<Complex64> =
                    w.weights().iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fft.forward(&mut spectrum, &mut Vec::new());
                spectrum.iter_mut().for_each(|c| *c = c.conj());
                Kernel::Fft { fft, spectrum }
            }
            FilterMode::Noncyclic => Kernel::Noncyclic {
                mass: in_bounds_mass(grid, w)?,
                taps: w.taps().to_vec(),
            },
        };
        Ok(LevelFilter {
            image: f,
            sets: LevelSets::new(f),
            kernel,
        })
    }

    pub fn grid(&self) -> Grid {
        self.image.grid()
    }

    pub fn num_levels(&self) -> usize {
        self.image.values().size()
    }

    /// Writes level `y` of the transform into `out` (length `|X|`).
    pub fn fill_level(&self, y: usize, out: &mut [f64]) {
        match &self.kernel {
            Kernel::Fft { .. } => self.fft_levels(y, None, out, &mut []),
            _ => self.scatter_level(y, out),
        }
    }

    /// Writes levels `y` and `y + 1` (the latter only if `second` is
    /// non-empty). The FFT path computes both with one transform, and
    /// [`LevelFilter::cube`] pairs levels `(0, 1), (2, 3), …` the same way.
    pub fn fill_pair(&self, y: usize, first: &mut [f64], second: &mut [f64]) {
        match &self.kernel {
            Kernel::Fft { .. } => {
                let next = (!second.is_empty()).then_some(y + 1);
                self.fft_levels(y, next, first, second)
            }
            _ => {
                self.scatter_level(y, first);
                if !second.is_empty() {
                    self.scatter_level(y + 1, second);
                }
            }
        }
    }

    fn scatter_level(&self, y: usize, out: &mut [f64]) {
        let grid = self.grid();
        out.fill(0.0);
        let set = self.sets.level(y);
        match &self.kernel {
            // taps outermost: every output pixel receives its contributions
            // in tap order, whatever the layout of the level set
            Kernel::Direct { taps } => {
                for &(t, wt) in taps {
                    for &p in set {
                        out[grid.index(grid.sub(grid.point(p as usize), t))] += wt;
                    }
                }
            }
            Kernel::Noncyclic { taps, mass } => {
                for &(t, wt) in taps {
                    let back = t.reversed();
                    for &p in set {
                        if let Some(x) = grid.offset_checked(grid.point(p as usize), back) {
                            out[grid.index(x)] += wt;
                        }
                    }
                }
                for (o, m) in out.iter_mut().zip(mass) {
                    *o /= m;
                }
            }
            Kernel::Fft { .. } => unreachable!("FFT levels are not scattered"),
        }
    }

    fn fft_levels(&self, y: usize, next: Option<usize>, first: &mut [f64], second: &mut [f64]) {
        let Kernel::Fft { fft, spectrum } = &self.kernel else {
            unreachable!()
        };
        let n = self.grid().len();
        let mut buf = vec![Complex64::default(); n];
        for &p in self.sets.level(y) {
            buf[p as usize].re = 1.0;
        }
        if let Some(y2) = next {
            for &p in self.sets.level(y2) {
                buf[p as usize].im = 1.0;
            }
        }
        let mut scratch = Vec::new();
        fft.forward(&mut buf, &mut scratch);
        for (b, s) in buf.iter_mut().zip(spectrum) {
            *b *= s;
        }
        fft.inverse(&mut buf, &mut scratch);
        let scale = 1.0 / n as f64;
        for (o, b) in first.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
        if next.is_some() {
            for (o, b) in second.iter_mut().zip(&buf) {
                *o = b.im * scale;
            }
        }
    }

    /// Materializes the full cube, computing levels in parallel.
    pub fn cube(&self) -> HistCube {
        let grid = self.grid();
        let n = grid.len();
        let mut cube = HistCube::zeros(grid, self.image.values().clone());
        let levels = self.num_levels();
        cube.levels_mut()
            .collect::<Vec<_>>()
            .par_chunks_mut(2)
            .enumerate()
            .for_each(|(i, pair)| {
                let y = 2 * i;
                match pair {
                    [a, b] => self.fill_pair(y, a, b),
                    [a] => self.fill_pair(y, a, &mut []),
                    _ => unreachable!(),
                }
            });
        debug_assert_eq!(cube.data().len(), n * levels);
        cube
    }
}

/// Per-pixel window mass that lands inside the image, without wrapping.
fn in_bounds_mass(grid: Grid, w: &WeightingFunction) -> Result<Vec<f64>> {
    let radius = w.support_radius().ok_or_else(|| {
        Error::InvalidWindow("noncyclic filtering needs a window with bounded support".into())
    })?;
    if 2 * radius + 1 > grid.width() || 2 * radius + 1 > grid.height() {
        return Err(Error::WindowTooLarge { radius, grid });
    }
    let mut mass = vec![0.0; grid.len()];
    for (i, m) in mass.iter_mut().enumerate() {
        let x = grid.point(i);
        for &(t, wt) in w.taps() {
            if grid.offset_checked(x, t).is_some() {
                *m += wt;
            }
        }
        if *m <= 0.0 {
            return Err(Error::InvalidWindow(format!(
                "window has no mass inside the image at {x:?}"
            )));
        }
    }
    Ok(mass)
}

/// `LH_w f` as a full data cube.
pub fn local_histogram(f: &Image, w: &WeightingFunction, plan: &FilterPlan) -> Result<HistCube> {
    Ok(LevelFilter::new(f, w, plan)?.cube())
}

/// A single level `LH_w f(·, y)` without materializing the cube.
pub fn local_histogram_level(
    f: &Image,
    w: &WeightingFunction,
    y: usize,
    plan: &FilterPlan,
) -> Result<Vec<f64>> {
    let size = f.values().size();
    if y >= size {
        return Err(Error::ValueOutOfRange { value: y, size });
    }
    let filter = LevelFilter::new(f, w, plan)?;
    let mut out = vec![0.0; f.grid().len()];
    filter.fill_level(y, &mut out);
    Ok(out)
}

/// Edge-renormalized transform: only window taps landing inside the image
/// contribute, and each pixel is divided by the in-bounds window mass.
pub fn noncyclic_local_histogram(f: &Image, w: &WeightingFunction) -> Result<HistCube> {
    local_histogram(f, w, &FilterPlan::noncyclic())
}

/// The local histogram at a single pixel, summed directly over the window taps.
pub fn local_histogram_at(
    f: &Image,
    w: &WeightingFunction,
    x: Point,
    cyclic: bool,
) -> Result<Vec<f64>> {
    let grid = f.grid();
    grid.check_same(&w.grid())?;
    let mut h = vec![0.0; f.values().size()];
    if cyclic {
        for &(t, wt) in w.taps() {
            h[f.get(grid.offset(x, t))] += wt;
        }
    } else {
        if w.support_radius().is_none() {
            return Err(Error::InvalidWindow(
                "noncyclic filtering needs a window with bounded support".into(),
            ));
        }
        let mut mass = 0.0;
        for &(t, wt) in w.taps() {
            if let Some(p) = grid.offset_checked(x, t) {
                h[f.get(p)] += wt;
                mass += wt;
            }
        }
        if mass <= 0.0 {
            return Err(Error::InvalidWindow(format!(
                "window has no mass inside the image at {x:?}"
            )));
        }
        h.iter_mut().for_each(|v| *v /= mass);
    }
    Ok(h)
}

/// Pushes a cube forward along a value map: `result(x, y') = Σ_{q(y) = y'} cube(x, y)`.
pub fn bin_histcube(cube: &HistCube, q: &ValueMap) -> Result<HistCube> {
    if q.source_size() != cube.num_levels() {
        return Err(Error::ValueSpaceMismatch {
            expected: q.source_size(),
            found: cube.num_levels(),
        });
    }
    let mut out = HistCube::zeros(cube.grid(), q.target().clone());
    for y in 0..cube.num_levels() {
        let target = q.apply(y);
        let src = cube.level(y);
        for (o, v) in out.level_mut(target).iter_mut().zip(src) {
            *o += v;
        }
    }
    Ok(out)
}

/// Both sides of the single-convolution identity
/// `(δ₀ ⊗ ω) * LH_w f = (w̃ ⊗ ω) * 1_f` over `X × Y`.
#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub lhs: HistCube,
    pub rhs: HistCube,
    pub max_discrepancy: f64,
}

/// Evaluates both sides of the `X × Y` convolution identity directly and
/// reports how far apart they are.
pub fn tensor_convolve_check(f: &Image, w: &WeightingFunction, omega: &[f64]) -> Result<TensorCheck> {
    let grid = f.grid();
    grid.check_same(&w.grid())?;
    let values = f.values().clone();
    let size = values.size();
    if omega.len() != size {
        return Err(Error::ValueSpaceMismatch {
            expected: size,
            found: omega.len(),
        });
    }
    let lh = local_histogram(f, w, &FilterPlan::direct())?;

    let mut lhs = HistCube::zeros(grid, values.clone());
    for y in 0..size {
        for (y2, &c) in omega.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let src = lh.level(values.sub(y, y2)).to_vec();
            for (o, v) in lhs.level_mut(y).iter_mut().zip(&src) {
                *o += c * v;
            }
        }
    }

    // (w̃ ⊗ ω) * 1_f at (x, y) = Σ_{x', y'} w(-x') ω(y') δ_{y-y'}(f(x - x'))
    let reversed = w.reverse();
    let mut rhs = HistCube::zeros(grid, values.clone());
    for x in grid.points() {
        let xi = grid.index(x);
        for (ti, &wt) in reversed.weights().iter().enumerate() {
            if wt == 0.0 {
                continue;
            }
            let v = f.get(grid.sub(x, grid.point(ti)));
            for (y2, &c) in omega.iter().enumerate() {
                let y = values.add(v, y2);
                rhs.level_mut(y)[xi] += wt * c;
            }
        }
    }
    let max_discrepancy = lhs.max_abs_diff(&rhs);
    Ok(TensorCheck {
        lhs,
        rhs,
        max_discrepancy,
    })
}
