//! Dense `|X| × |Y|` data cubes, stored one contiguous plane per value.

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::image::{Image, ValueSpace};

#[derive(Clone, Debug, PartialEq)]
pub struct HistCube {
    grid: Grid,
    values: ValueSpace,
    data: Vec<f64>,
}

impl HistCube {
    pub fn zeros(grid: Grid, values: ValueSpace) -> Self {
        let data = vec![0.0; grid.len() * values.size()];
        HistCube { grid, values, data }
    }

    /// Wraps level-major data (`data[y * |X| + x]`).
    pub fn from_data(grid: Grid, values: ValueSpace, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() * values.size() {
            return Err(Error::InvalidArgument(format!(
                "cube data has {} entries, expected {}",
                data.len(),
                grid.len() * values.size()
            )));
        }
        Ok(HistCube { grid, values, data })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &ValueSpace {
        &self.values
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn num_levels(&self) -> usize {
        self.values.size()
    }

    pub fn level(&self, y: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[y * n..(y + 1) * n]
    }

    pub fn level_mut(&mut self, y: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.data[y * n..(y + 1) * n]
    }

    pub fn levels_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        let n = self.grid.len();
        self.data.chunks_exact_mut(n)
    }

    pub fn get(&self, p: Point, y: usize) -> f64 {
        self.data[y * self.grid.len() + self.grid.index(p)]
    }

    pub fn get_index(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.grid.len() + x]
    }

    /// The local histogram `h_x` at a flat pixel index.
    pub fn histogram(&self, x: usize) -> Vec<f64> {
        (0..self.num_levels()).map(|y| self.get_index(x, y)).collect()
    }

    pub fn max_abs_diff(&self, other: &HistCube) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "cube shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of any per-pixel level sum from one.
    pub fn normalization_error(&self) -> f64 {
        (0..self.grid.len())
            .map(|x| {
                let s: f64 = (0..self.num_levels()).map(|y| self.get_index(x, y)).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `Σ_i c_i · cube_i` over cubes of identical shape.
    pub fn linear_combination(terms: &[(f64, &HistCube)]) -> Result<HistCube> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let mut out = HistCube::zeros(first.grid, first.values.clone());
        for (c, cube) in terms {
            first.grid.check_same(&cube.grid)?;
            if cube.values != first.values {
                return Err(Error::ValueSpaceMismatch {
                    expected: first.values.size(),
                    found: cube.values.size(),
                });
            }
            for (o, v) in out.data.iter_mut().zip(&cube.data) {
                *o += c * v;
            }
        }
        Ok(out)
    }
}

/// `1_f(x, y) = δ_y(f(x))`.
pub fn characteristic_cube(f: &Image) -> HistCube {
    let grid = f.grid();
    let mut cube = HistCube::zeros(grid, f.values().clone());
    let n = grid.len();
    for (x, &v) in f.pixels().iter().enumerate() {
        cube.data[v as usize * n + x] = 1.0;
    }
    cube
}
