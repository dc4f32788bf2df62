//! Weighting functions `w : X → [0, ∞)` with unit mass.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Grid, Offset, Point};

const EXACT_TOL: f64 = 1e-12;
const RENORMALIZE_TOL: f64 = 1e-6;

/// A nonnegative window over the grid whose values sum to one.
///
/// Both a dense copy over `X` and the sparse list of nonzero taps are kept.
/// Taps carry signed offsets when the window was built from offsets (or a
/// support radius was given), which the noncyclic filter needs to decide
/// which taps fall off the image edge.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightingFunction {
    grid: Grid,
    weights: Vec<f64>,
    taps: Vec<(Offset, f64)>,
    support_radius: Option<usize>,
}

fn normalize(values: &mut [f64], taps: &mut [(Offset, f64)]) -> Result<()> {
    if let Some(bad) = values.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidWindow(format!("weight {bad} is not a nonnegative number")));
    }
    let total: f64 = values.iter().sum();
    let err = (total - 1.0).abs();
    if err <= EXACT_TOL {
        Ok(())
    } else if err <= RENORMALIZE_TOL {
        values.iter_mut().for_each(|w| *w /= total);
        taps.iter_mut().for_each(|t| t.1 /= total);
        Ok(())
    } else {
        Err(Error::InvalidWindow(format!("weights sum to {total}, not 1")))
    }
}

impl WeightingFunction {
    /// Builds a window from a dense array over the grid (row-major).
    pub fn from_dense(grid: Grid, weights: Vec<f64>, support_radius: Option<usize>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::InvalidWindow(format!(
                "expected {} weights, got {}",
                grid.len(),
                weights.len()
            )));
        }
        let mut taps = Vec::new();
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let p = grid.point(i);
            let off = match support_radius {
                Some(r) => grid.signed_offset(p, r).ok_or_else(|| {
                    Error::InvalidWindow(format!("weight at {p:?} lies outside support radius {r}"))
                })?,
                None => Offset::new(p.row as isize, p.col as isize),
            };
            taps.push((off, w));
        }
        let mut weights = weights;
        normalize(&mut weights, &mut taps)?;
        Ok(WeightingFunction {
            grid,
            weights,
            taps,
            support_radius,
        })
    }

    /// Builds a window from signed taps; repeated offsets accumulate.
    pub fn from_taps(grid: Grid, taps: &[(Offset, f64)]) -> Result<Self> {
        let mut merged: BTreeMap<(isize, isize), f64> = BTreeMap::new();
        for &(off, w) in taps {
            *merged.entry((off.dr, off.dc)).or_insert(0.0) += w;
        }
        let mut taps: Vec<(Offset, f64)> = merged
            .into_iter()
            .filter(|&(_, w)| w != 0.0)
            .map(|((dr, dc), w)| (Offset::new(dr, dc), w))
            .collect();
        let mut weights = vec![0.0; grid.len()];
        for &(off, w) in &taps {
            weights[grid.index(grid.offset_point(off))] += w;
        }
        normalize(&mut weights, &mut taps)?;
        let support_radius = taps.iter().map(|(o, _)| o.radius()).max().unwrap_or(0);
        Ok(WeightingFunction {
            grid,
            weights,
            taps,
            support_radius: Some(support_radius),
        })
    }

    /// `δ_0`
    pub fn delta(grid: Grid) -> Self {
        Self::from_taps(grid, &[(Offset::ZERO, 1.0)]).expect("point mass is a valid window")
    }

    /// Uniform weights over the `(2r+1)²` square.
    pub fn square(grid: Grid, radius: usize) -> Result<Self> {
        let r = radius as isize;
        let n = (2 * radius + 1).pow(2) as f64;
        let taps: Vec<_> = (-r..=r)
            .flat_map(|dr| (-r..=r).map(move |dc| (Offset::new(dr, dc), 1.0 / n)))
            .collect();
        Self::from_taps(grid, &taps)
    }

    /// Mass `center` at the origin and the rest spread evenly over the other
    /// offsets of the Euclidean disk of the given radius. With `center = None`
    /// the disk is uniform.
    ///
    /// `disk(grid, 1, Some(0.5))` is `½δ₀ + ⅛(δ₋₁,₀ + δ₁,₀ + δ₀,₋₁ + δ₀,₁)`.
    pub fn disk(grid: Grid, radius: usize, center: Option<f64>) -> Result<Self> {
        let r = radius as isize;
        let ring: Vec<Offset> = (-r..=r)
            .flat_map(|dr| (-r..=r).map(move |dc| Offset::new(dr, dc)))
            .filter(|o| *o != Offset::ZERO && o.norm_sq() <= radius * radius)
            .collect();
        let c0 = center.unwrap_or(1.0 / (ring.len() + 1) as f64);
        if !(0.0..=1.0).contains(&c0) {
            return Err(Error::InvalidWindow(format!("center weight {c0} outside [0, 1]")));
        }
        if ring.is_empty() && (c0 - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidWindow("radius 0 disk needs center weight 1".into()));
        }
        let mut taps = vec![(Offset::ZERO, c0)];
        if !ring.is_empty() {
            let rest = (1.0 - c0) / ring.len() as f64;
            taps.extend(ring.into_iter().map(|o| (o, rest)));
        }
        Self::from_taps(grid, &taps)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, p: Point) -> f64 {
        self.weights[self.grid.index(p)]
    }

    /// Nonzero taps. Offsets are signed when a support radius is known.
    pub fn taps(&self) -> &[(Offset, f64)] {
        &self.taps
    }

    pub fn support_radius(&self) -> Option<usize> {
        self.support_radius
    }

    pub fn support_size(&self) -> usize {
        self.taps.len()
    }

    /// `w̃(x) = w(-x)`
    pub fn reverse(&self) -> Self {
        let grid = self.grid;
        let mut weights = vec![0.0; grid.len()];
        for (i, &w) in self.weights.iter().enumerate() {
            weights[grid.index(grid.neg(grid.point(i)))] = w;
        }
        let taps = if self.support_radius.is_some() {
            self.taps.iter().map(|&(o, w)| (o.reversed(), w)).collect()
        } else {
            // unsigned taps: re-derive from the reversed dense array
            weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, &w)| {
                    let p = grid.point(i);
                    (Offset::new(p.row as isize, p.col as isize), w)
                })
                .collect()
        };
        WeightingFunction {
            grid,
            weights,
            taps,
            support_radius: self.support_radius,
        }
    }

    /// The same window with its taps re-laid onto another grid.
    pub fn on_grid(&self, grid: Grid) -> Result<Self> {
        if self.support_radius.is_none() && grid != self.grid {
            return Err(Error::InvalidWindow(
                "only windows with bounded support can move between grids".into(),
            ));
        }
        Self::from_taps(grid, &self.taps)
    }
}

/// Textual window description: `delta`, `box:R` or `center-weighted:R[:c0]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowSpec {
    Delta,
    Box { radius: usize },
    CenterWeighted { radius: usize, center: Option<f64> },
}

impl WindowSpec {
    pub fn build(&self, grid: Grid) -> Result<WeightingFunction> {
        match *self {
            WindowSpec::Delta => Ok(WeightingFunction::delta(grid)),
            WindowSpec::Box { radius } => WeightingFunction::square(grid, radius),
            WindowSpec::CenterWeighted { radius, center } => {
                WeightingFunction::disk(grid, radius, center)
            }
        }
    }

    pub fn radius(&self) -> usize {
        match *self {
            WindowSpec::Delta => 0,
            WindowSpec::Box { radius } | WindowSpec::CenterWeighted { radius, .. } => radius,
        }
    }
}

impl FromStr for WindowSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidWindow(format!("unrecognized window spec `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let radius = |p: &str| p.parse::<usize>().map_err(|_| bad());
        match parts.as_slice() {
            ["delta"] => Ok(WindowSpec::Delta),
            ["box", r] => Ok(WindowSpec::Box { radius: radius(r)? }),
            ["center-weighted", r] => Ok(WindowSpec::CenterWeighted {
                radius: radius(r)?,
                center: None,
            }),
            ["center-weighted", r, c] => Ok(WindowSpec::CenterWeighted {
                radius: radius(r)?,
                center: Some(c.parse().map_err(|_| bad())?),
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowSpec::Delta => write!(f, "delta"),
            WindowSpec::Box { radius } => write!(f, "box:{radius}"),
            WindowSpec::CenterWeighted { radius, center: None } => {
                write!(f, "center-weighted:{radius}")
            }
            WindowSpec::CenterWeighted {
                radius,
                center: Some(c),
            } => write!(f, "center-weighted:{radius}:{c}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(w: usize, h: usize) -> Grid {
        Grid::new(w, h).unwrap()
    }

    #[test]
    fn delta_reverses_to_itself() {
        let w = WeightingFunction::delta(g(5, 4));
        assert_eq!(w.reverse().weights(), w.weights());
    }

    #[test]
    fn fig2_window_is_symmetric() {
        let w: WindowSpec = "center-weighted:1:0.5".parse().unwrap();
        let w = w.build(g(8, 6)).unwrap();
        assert_eq!(w.weight(Point::ORIGIN), 0.5);
        assert_eq!(w.weight(Point::new(5, 0)), 0.125);
        assert_eq!(w.weight(Point::new(0, 7)), 0.125);
        assert_eq!(w.support_size(), 5);
        assert_eq!(w.reverse().weights(), w.weights());
    }

    #[test]
    fn shifted_mass_reverses() {
        let grid = g(6, 4);
        let w = WeightingFunction::from_taps(grid, &[(Offset::new(1, 0), 1.0)]).unwrap();
        let r = w.reverse();
        assert_eq!(r.weight(Point::new(3, 0)), 1.0);
        assert_eq!(r.taps(), &[(Offset::new(-1, 0), 1.0)]);
        assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn renormalizes_small_rounding_only() {
        let grid = g(3, 1);
        let w = WeightingFunction::from_dense(grid, vec![0.3333333, 0.3333333, 0.3333333], None)
            .unwrap();
        assert!((w.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(WeightingFunction::from_dense(grid, vec![0.3, 0.3, 0.3], None).is_err());
        assert!(WeightingFunction::from_dense(grid, vec![1.5, -0.5, 0.0], None).is_err());
    }

    #[test]
    fn window_spec_round_trip() {
        for s in ["delta", "box:3", "center-weighted:4", "center-weighted:1:0.5"] {
            let spec: WindowSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("ring:3".parse::<WindowSpec>().is_err());
    }

    #[test]
    fn uniform_disk_radius_4() {
        let w = WeightingFunction::disk(g(32, 32), 4, None).unwrap();
        assert_eq!(w.support_size(), 49);
        assert_eq!(w.support_radius(), Some(4));
    }
}
