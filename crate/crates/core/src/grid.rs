//! The pixel-location group `Z_H × Z_W` with toroidal arithmetic.
//!
//! Points are addressed as `(row, col)` with the origin in the upper-left
//! corner. Pixel buffers are stored row-major, so the flat index of a point is
//! `row * width + col`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Grid {
    width: usize,
    height: usize,
}

/// A location on a [`Grid`], always reduced into range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub row: usize,
    pub col: usize,
}

/// A signed displacement, used for window taps and blob shapes before they are
/// wrapped onto a particular grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Offset {
    pub dr: isize,
    pub dc: isize,
}

impl Point {
    pub const ORIGIN: Point = Point { row: 0, col: 0 };

    pub fn new(row: usize, col: usize) -> Self {
        Point { row, col }
    }
}

impl Offset {
    pub const ZERO: Offset = Offset { dr: 0, dc: 0 };

    pub fn new(dr: isize, dc: isize) -> Self {
        Offset { dr, dc }
    }

    pub fn reversed(self) -> Self {
        Offset::new(-self.dr, -self.dc)
    }

    /// Chebyshev norm, the radius of the smallest square window holding this tap.
    pub fn radius(self) -> usize {
        self.dr.unsigned_abs().max(self.dc.unsigned_abs())
    }

    pub fn norm_sq(self) -> usize {
        (self.dr * self.dr + self.dc * self.dc) as usize
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Grid { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `|X|`
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, p: Point) -> usize {
        debug_assert!(p.row < self.height && p.col < self.width);
        p.row * self.width + p.col
    }

    pub fn point(&self, index: usize) -> Point {
        Point::new(index / self.width, index % self.width)
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Reduces an arbitrary signed coordinate pair into the grid.
    pub fn wrap(&self, row: isize, col: isize) -> Point {
        Point::new(
            row.rem_euclid(self.height as isize) as usize,
            col.rem_euclid(self.width as isize) as usize,
        )
    }

    pub fn add(&self, a: Point, b: Point) -> Point {
        Point::new((a.row + b.row) % self.height, (a.col + b.col) % self.width)
    }

    pub fn neg(&self, a: Point) -> Point {
        Point::new(
            (self.height - a.row) % self.height,
            (self.width - a.col) % self.width,
        )
    }

    pub fn sub(&self, a: Point, b: Point) -> Point {
        self.add(a, self.neg(b))
    }

    pub fn offset(&self, p: Point, off: Offset) -> Point {
        self.wrap(p.row as isize + off.dr, p.col as isize + off.dc)
    }

    /// The point reached from `p` by `off` without wrapping, if it stays on the grid.
    pub fn offset_checked(&self, p: Point, off: Offset) -> Option<Point> {
        let row = p.row as isize + off.dr;
        let col = p.col as isize + off.dc;
        (row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width)
            .then(|| Point::new(row as usize, col as usize))
    }

    /// The point `off` itself, reduced onto the grid.
    pub fn offset_point(&self, off: Offset) -> Point {
        self.wrap(off.dr, off.dc)
    }

    /// Maps a grid point to its signed representative within `radius` of the
    /// origin, if one exists.
    pub fn signed_offset(&self, p: Point, radius: usize) -> Option<Offset> {
        let signed = |v: usize, n: usize| -> Option<isize> {
            if v <= radius {
                Some(v as isize)
            } else if n - v <= radius {
                Some(v as isize - n as isize)
            } else {
                None
            }
        };
        Some(Offset::new(
            signed(p.row, self.height)?,
            signed(p.col, self.width)?,
        ))
    }

    /// Index of `index` moved by `shift` (cyclic).
    pub fn shift_index(&self, index: usize, shift: Point) -> usize {
        self.index(self.add(self.point(index), shift))
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                expected: *self,
                found: *other,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_laws_exhaustive_up_to_4x4() {
        for w in 1..=4 {
            for h in 1..=4 {
                let g = Grid::new(w, h).unwrap();
                let pts: Vec<_> = g.points().collect();
                for &a in &pts {
                    assert_eq!(g.add(a, Point::ORIGIN), a);
                    assert_eq!(g.add(a, g.neg(a)), Point::ORIGIN);
                    for &b in &pts {
                        assert_eq!(g.add(a, b), g.add(b, a));
                        for &c in &pts {
                            assert_eq!(g.add(g.add(a, b), c), g.add(a, g.add(b, c)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(8, 6).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(g.point(i)), i);
        }
        assert_eq!(g.point(9), Point::new(1, 1));
    }

    #[test]
    fn signed_offsets() {
        let g = Grid::new(5, 5).unwrap();
        assert_eq!(g.signed_offset(Point::new(4, 1), 1), Some(Offset::new(-1, 1)));
        assert_eq!(g.signed_offset(Point::new(2, 0), 1), None);
        assert_eq!(g.offset_point(Offset::new(-1, 0)), Point::new(4, 0));
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(Grid::new(0, 3).is_err());
    }
}
