//! Per-pixel texture classification by nearest shifted subspace.
//!
//! Training draws `M_k` local histograms from the interior of each class
//! region, centers them on their mean `h̄_k` and keeps the `N_k` dominant left
//! singular vectors `u_{k;n}`. A pixel with local histogram `h` is assigned
//! the class minimizing
//!
//! `‖h − h̄_k‖² − Σ_n ⟨h − h̄_k, u_{k;n}⟩²`,
//!
//! which is the squared distance from `h` to the affine subspace
//! `h̄_k + span{u_{k;n}}`. Image classification evaluates both sums one value
//! level at a time, so the histogram cube is never held in memory.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::histogram::{local_histogram, local_histogram_at, FilterPlan, LevelFilter};
use crate::image::{Image, LabelMap};
use crate::rng;
use crate::window::WeightingFunction;

/// Locations with label `class` at least `margin` pixels from every border,
/// `count` of them drawn uniformly without replacement, in ascending order.
pub fn sample_training_points(
    labels: &LabelMap,
    class: usize,
    count: usize,
    margin: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    let grid = labels.grid();
    let eligible: Vec<Point> = grid
        .points()
        .filter(|p| {
            labels.get(*p) == class
                && p.row >= margin
                && p.col >= margin
                && p.row + margin < grid.height()
                && p.col + margin < grid.width()
        })
        .collect();
    if eligible.len() < count {
        return Err(Error::InsufficientPoints {
            class,
            requested: count,
            available: eligible.len(),
        });
    }
    let mut r = rng::stream(rng::derive(seed, class as u64), 0);
    let mut picked: Vec<usize> = index::sample(&mut r, eligible.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| eligible[i]).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSamples {
    pub locations: Vec<Point>,
    pub histograms: Vec<Vec<f64>>,
}

/// Sampled local histograms `h_{k;m}` for every class.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    num_levels: usize,
    classes: Vec<ClassSamples>,
}

impl TrainingSet {
    pub fn new(num_levels: usize) -> Self {
        TrainingSet {
            num_levels,
            classes: Vec::new(),
        }
    }

    pub fn add_class(&mut self, locations: Vec<Point>, histograms: Vec<Vec<f64>>) -> Result<()> {
        let class = self.classes.len();
        if histograms.is_empty() {
            return Err(Error::InsufficientPoints {
                class,
                requested: 1,
                available: 0,
            });
        }
        if locations.len() != histograms.len() {
            return Err(Error::CountMismatch {
                expected: histograms.len(),
                found: locations.len(),
            });
        }
        for h in &histograms {
            if h.len() != self.num_levels {
                return Err(Error::ValueSpaceMismatch {
                    expected: self.num_levels,
                    found: h.len(),
                });
            }
            if h.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument("histogram entries must be nonnegative".into()));
            }
            let total: f64 = h.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("histogram sums to {total}, not 1")));
            }
        }
        self.classes.push(ClassSamples {
            locations,
            histograms,
        });
        Ok(())
    }

    /// Samples `count` interior points of class `class` in `truth` and adds
    /// the local histograms of `f` there as the next class.
    #[allow(clippy::too_many_arguments)]
    pub fn add_class_from_image(
        &mut self,
        f: &Image,
        truth: &LabelMap,
        class: usize,
        w: &WeightingFunction,
        cyclic: bool,
        count: usize,
        margin: usize,
        seed: u64,
    ) -> Result<()> {
        f.grid().check_same(&truth.grid())?;
        if f.values().size() != self.num_levels {
            return Err(Error::ValueSpaceMismatch {
                expected: self.num_levels,
                found: f.values().size(),
            });
        }
        let points = sample_training_points(truth, class, count, margin, seed)?;
        let hists = points
            .par_iter()
            .map(|&p| local_histogram_at(f, w, p, cyclic))
            .collect::<Result<Vec<_>>>()?;
        self.add_class(points, hists)
    }

    /// One class per entry of `per_class`, all sampled from the same image.
    pub fn from_image(
        f: &Image,
        truth: &LabelMap,
        w: &WeightingFunction,
        cyclic: bool,
        per_class: &[usize],
        margin: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut set = TrainingSet::new(f.values().size());
        for (k, &m) in per_class.iter().enumerate() {
            set.add_class_from_image(f, truth, k, w, cyclic, m, margin, seed)?;
        }
        Ok(set)
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, k: usize) -> &ClassSamples {
        &self.classes[k]
    }
}

/// The affine subspace `h̄_k + span{u_{k;n}}` of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassSubspace {
    pub mean: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// Set when the samples had rank zero and the class fell back to its mean.
    pub mean_only: bool,
}

impl ClassSubspace {
    pub fn num_components(&self) -> usize {
        self.directions.len()
    }

    /// `‖d‖² − Σ_n ⟨d, u_n⟩²` with `d = h − h̄`, accumulated level by level.
    pub fn score(&self, h: &[f64]) -> f64 {
        let mut dist = 0.0;
        let mut dots = vec![0.0; self.directions.len()];
        for (y, (&hy, &my)) in h.iter().zip(&self.mean).enumerate() {
            let d = hy - my;
            dist += d * d;
            for (acc, u) in dots.iter_mut().zip(&self.directions) {
                *acc += d * u[y];
            }
        }
        finish_score(dist, &dots)
    }

    /// `‖d − Σ_n ⟨d, u_n⟩ u_n‖²`, the explicit residual.
    pub fn residual(&self, h: &[f64]) -> f64 {
        let mut d: Vec<f64> = h.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let coeffs: Vec<f64> = self.directions.iter().map(|u| dot(&d, u)).collect();
        for (c, u) in coeffs.iter().zip(&self.directions) {
            d.iter_mut().zip(u).for_each(|(di, ui)| *di -= c * ui);
        }
        dot(&d, &d)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn finish_score(dist: f64, dots: &[f64]) -> f64 {
    let mut s = dist;
    for d in dots {
        s -= d * d;
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceClassifier {
    num_levels: usize,
    classes: Vec<ClassSubspace>,
}

/// Flips `u` so its largest-magnitude entry is positive. Magnitudes within a
/// relative `1e-9` of the maximum count as tied, and the first of them decides.
fn fix_sign(u: &mut [f64]) {
    let max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let Some(lead) = u.iter().position(|v| v.abs() >= max * (1.0 - 1e-9)) else {
        return;
    };
    if u[lead] < 0.0 {
        u.iter_mut().for_each(|v| *v = -*v);
    }
}

fn train_class(samples: &ClassSamples, levels: usize, components: usize, class: usize) -> Result<ClassSubspace> {
    let m = samples.histograms.len();
    let max = m.min(levels);
    if components > max {
        return Err(Error::TooManyComponents {
            class,
            components,
            max,
        });
    }
    let mut mean = vec![0.0; levels];
    for h in &samples.histograms {
        mean.iter_mut().zip(h).for_each(|(a, b)| *a += b);
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let centered = DMatrix::from_fn(levels, m, |y, j| samples.histograms[j][y] - mean[y]);
    if components == 0 {
        return Ok(ClassSubspace {
            mean,
            directions: vec![],
            singular_values: vec![],
            mean_only: false,
        });
    }
    if centered.iter().all(|&v| v == 0.0) {
        return Ok(ClassSubspace {
            mean,
            directions: vec![],
            singular_values: vec![0.0; components],
            mean_only: true,
        });
    }
    let svd = centered.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let mut directions = Vec::with_capacity(components);
    let mut singular_values = Vec::with_capacity(components);
    for &j in order.iter().take(components) {
        let mut col: Vec<f64> = u.column(j).iter().copied().collect();
        fix_sign(&mut col);
        directions.push(col);
        singular_values.push(svd.singular_values[j]);
    }
    Ok(ClassSubspace {
        mean,
        directions,
        singular_values,
        mean_only: false,
    })
}

/// Fits one subspace per class; `components[k]` is `N_k`.
pub fn train(set: &TrainingSet, components: &[usize]) -> Result<SubspaceClassifier> {
    if components.len() != set.num_classes() {
        return Err(Error::CountMismatch {
            expected: set.num_classes(),
            found: components.len(),
        });
    }
    let classes = (0..set.num_classes())
        .into_par_iter()
        .map(|k| train_class(set.class(k), set.num_levels(), components[k], k))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubspaceClassifier {
        num_levels: set.num_levels(),
        classes,
    })
}

impl SubspaceClassifier {
    pub fn new(num_levels: usize, classes: Vec<ClassSubspace>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidArgument("a classifier needs at least one class".into()));
        }
        for c in &classes {
            if c.mean.len() != num_levels || c.directions.iter().any(|u| u.len() != num_levels) {
                return Err(Error::ValueSpaceMismatch {
                    expected: num_levels,
                    found: c.mean.len(),
                });
            }
            if c.singular_values.len() < c.directions.len() {
                return Err(Error::InvalidArgument("missing singular values".into()));
            }
        }
        Ok(SubspaceClassifier { num_levels, classes })
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[ClassSubspace] {
        &self.classes
    }

    pub fn class(&self, k: usize) -> &ClassSubspace {
        &self.classes[k]
    }

    /// Largest deviation of any class's Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.classes {
            for (i, a) in c.directions.iter().enumerate() {
                for (j, b) in c.directions.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((dot(a, b) - target).abs());
                }
            }
        }
        worst
    }

    /// Objective values for every class.
    pub fn scores(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.num_levels {
            return Err(Error::ValueSpaceMismatch {
                expected: self.num_levels,
                found: h.len(),
            });
        }
        Ok(self.classes.iter().map(|c| c.score(h)).collect())
    }

    /// Reals held by [`classify_image`]: `Σ_k (N_k + 1)` running sums per
    /// pixel plus two level planes.
    pub fn streaming_memory(&self, grid: Grid) -> usize {
        let per_pixel: usize = self.classes.iter().map(|c| c.num_components() + 1).sum();
        (per_pixel + 2) * grid.len()
    }
}

fn argmin(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (k, s) in scores.into_iter().enumerate() {
        if s < best_score {
            best = k;
            best_score = s;
        }
    }
    best
}

/// Class of the nearest shifted subspace; ties go to the lowest class index.
pub fn classify_pixel(h: &[f64], clf: &SubspaceClassifier) -> Result<usize> {
    Ok(argmin(clf.scores(h)?))
}

fn check_image(f: &Image, w: &WeightingFunction, clf: &SubspaceClassifier) -> Result<()> {
    f.grid().check_same(&w.grid())?;
    if f.values().size() != clf.num_levels() {
        return Err(Error::ValueSpaceMismatch {
            expected: clf.num_levels(),
            found: f.values().size(),
        });
    }
    Ok(())
}

/// Classifies every pixel without materializing the histogram cube.
///
/// Levels are produced two at a time, paired exactly as the cube path pairs
/// them, and folded into per-pixel running sums (`‖h − h̄_k‖²` and each
/// `⟨h − h̄_k, u_{k;n}⟩`) in ascending level order. Every pixel therefore sees
/// the same arithmetic as [`classify_pixel`] on the materialized cube, and
/// the result is identical to [`classify_image_reference`].
pub fn classify_image(
    f: &Image,
    w: &WeightingFunction,
    clf: &SubspaceClassifier,
    plan: &FilterPlan,
) -> Result<LabelMap> {
    const CHUNK: usize = 1024;
    check_image(f, w, clf)?;
    let grid = f.grid();
    let n = grid.len();
    let filter = LevelFilter::new(f, w, plan)?;
    let classes = clf.classes();
    // per pixel, per class: the distance sum followed by one sum per direction
    let stride: usize = classes.iter().map(|c| c.num_components() + 1).sum();
    let mut acc = vec![0.0; n * stride];
    let (mut first, mut second) = (vec![0.0; n], vec![0.0; n]);
    let levels = clf.num_levels();
    for y in (0..levels).step_by(2) {
        let pair = y + 1 < levels;
        filter.fill_pair(y, &mut first, if pair { &mut second } else { &mut [] });
        let planes: &[(usize, &[f64])] = if pair { &[(y, &first), (y + 1, &second)] } else { &[(y, &first)] };
        acc.par_chunks_mut(CHUNK * stride).enumerate().for_each(|(ci, block)| {
            let x0 = ci * CHUNK;
            for &(y, plane) in planes {
                for (i, a) in block.chunks_exact_mut(stride).enumerate() {
                    let hy = plane[x0 + i];
                    let mut slot = 0;
                    for c in classes {
                        let d = hy - c.mean[y];
                        a[slot] += d * d;
                        for (j, u) in c.directions.iter().enumerate() {
                            a[slot + 1 + j] += d * u[y];
                        }
                        slot += c.num_components() + 1;
                    }
                }
            }
        });
    }
    let labels = acc
        .par_chunks_exact(stride)
        .map(|a| {
            let mut slot = 0;
            argmin(classes.iter().map(|c| {
                let k = c.num_components();
                let s = finish_score(a[slot], &a[slot + 1..slot + 1 + k]);
                slot += k + 1;
                s
            })) as u32
        })
        .collect();
    LabelMap::new(grid, clf.num_classes(), labels)
}

/// Reference path: materializes `LH_w f` and classifies each pixel's histogram.
pub fn classify_image_reference(
    f: &Image,
    w: &WeightingFunction,
    clf: &SubspaceClassifier,
    plan: &FilterPlan,
) -> Result<LabelMap> {
    check_image(f, w, clf)?;
    let cube = local_histogram(f, w, plan)?;
    let labels = (0..f.grid().len())
        .into_par_iter()
        .map(|x| classify_pixel(&cube.histogram(x), clf).map(|k| k as u32))
        .collect::<Result<Vec<_>>>()?;
    LabelMap::new(f.grid(), clf.num_classes(), labels)
}

/// True class in rows, predicted class in columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("confusion counts must be square".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Row percentages; rows without support are all zero.
    pub fn percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.percentages().iter().enumerate().map(|(k, r)| r[k]).collect()
    }

    /// Whole percentages per row, rounded by largest remainder so that every
    /// supported row sums to exactly 100.
    pub fn rounded_percentages(&self) -> Vec<Vec<u64>> {
        self.percentages()
            .iter()
            .zip(&self.counts)
            .map(|(row, counts)| {
                if counts.iter().all(|&c| c == 0) {
                    return vec![0; row.len()];
                }
                let mut out: Vec<u64> = row.iter().map(|p| p.floor() as u64).collect();
                let short = 100 - out.iter().sum::<u64>();
                let mut order: Vec<usize> = (0..row.len()).collect();
                order.sort_by(|&a, &b| {
                    let ra = row[a] - row[a].floor();
                    let rb = row[b] - row[b].floor();
                    rb.total_cmp(&ra).then(a.cmp(&b))
                });
                for &i in order.iter().take(short as usize) {
                    out[i] += 1;
                }
                out
            })
            .collect()
    }

    /// Text table with rows and columns headed by `names` (class indices if
    /// `names` is too short).
    pub fn to_table(&self, names: &[String]) -> String {
        let k = self.num_classes();
        let name = |i: usize| names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let width = (0..k).map(|i| name(i).len()).max().unwrap_or(1).max(4);
        let mut out = String::new();
        let _ = write!(out, "{:width$}", "");
        for j in 0..k {
            let _ = write!(out, " {:>width$}", name(j));
        }
        out.push('\n');
        for (i, row) in self.rounded_percentages().iter().enumerate() {
            let _ = write!(out, "{:width$}", name(i));
            for v in row {
                let _ = write!(out, " {v:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

/// Compares `predicted` with `truth` over pixels whose true label is not in
/// `ignore`. Ignored labels above every other label do not get a row.
pub fn evaluate(predicted: &LabelMap, truth: &LabelMap, ignore: &[usize]) -> Result<ConfusionMatrix> {
    predicted.grid().check_same(&truth.grid())?;
    let kept = (0..truth.num_labels()).rev().find(|l| !ignore.contains(l)).map_or(0, |l| l + 1);
    let k = predicted.num_labels().max(kept);
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in predicted.labels().iter().zip(truth.labels()) {
        if !ignore.contains(&(t as usize)) {
            counts[t as usize][p as usize] += 1;
        }
    }
    ConfusionMatrix::from_counts(counts)
}

/// Relabels as `ignore` every pixel within `radius` of the image border or of
/// a pixel with a different label (Chebyshev distance), so that only pixels
/// whose whole square window lies inside one region keep their label.
pub fn erode_labels(truth: &LabelMap, radius: usize, ignore: usize) -> Result<LabelMap> {
    let grid = truth.grid();
    let r = radius as isize;
    let labels = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            let own = truth.labels()[i];
            for dr in -r..=r {
                for dc in -r..=r {
                    match grid.offset_checked(p, crate::grid::Offset::new(dr, dc)) {
                        Some(q) if truth.get(q) == own as usize => {}
                        _ => return ignore as u32,
                    }
                }
            }
            own
        })
        .collect();
    LabelMap::new(grid, truth.num_labels().max(ignore + 1), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueSpace;

    fn subspace(mean: Vec<f64>, directions: Vec<Vec<f64>>) -> ClassSubspace {
        let n = directions.len();
        ClassSubspace {
            mean,
            directions,
            singular_values: vec![1.0; n],
            mean_only: false,
        }
    }

    #[test]
    fn all_eligible_points() {
        let grid = Grid::new(5, 4).unwrap();
        let labels = LabelMap::from_fn(grid, 2, |p| usize::from(p.col >= 2)).unwrap();
        let pts = sample_training_points(&labels, 1, 3, 1, 9).unwrap();
        let eligible = [Point::new(1, 2), Point::new(1, 3), Point::new(2, 2), Point::new(2, 3)];
        assert_eq!(pts.len(), 3);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!(pts.iter().all(|p| eligible.contains(p)));
        let all = sample_training_points(&labels, 1, 4, 1, 9).unwrap();
        assert_eq!(all, eligible.to_vec());
        assert!(matches!(
            sample_training_points(&labels, 1, 5, 1, 9),
            Err(Error::InsufficientPoints { available: 4, .. })
        ));
    }

    #[test]
    fn identical_samples_are_mean_only() {
        let mut set = TrainingSet::new(3);
        let h = vec![0.5, 0.25, 0.25];
        set.add_class(vec![Point::ORIGIN; 4], vec![h.clone(); 4]).unwrap();
        let clf = train(&set, &[2]).unwrap();
        let c = clf.class(0);
        assert_eq!(c.mean, h);
        assert!(c.mean_only);
        assert!(c.singular_values.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn two_samples_give_their_difference() {
        let mut set = TrainingSet::new(3);
        let a = vec![0.6, 0.4, 0.0];
        let b = vec![0.0, 0.4, 0.6];
        set.add_class(vec![Point::ORIGIN; 2], vec![a.clone(), b.clone()]).unwrap();
        let clf = train(&set, &[1]).unwrap();
        let u = &clf.class(0).directions[0];
        let s = 1.0 / 2f64.sqrt();
        // ties in magnitude resolve to the first coordinate
        assert!((u[0] - s).abs() < 1e-12 && u[1].abs() < 1e-12 && (u[2] + s).abs() < 1e-12);
        assert!(clf.orthonormality_error() < 1e-12);
    }

    #[test]
    fn too_many_components() {
        let mut set = TrainingSet::new(4);
        set.add_class(vec![Point::ORIGIN; 2], vec![vec![0.25; 4]; 2]).unwrap();
        assert!(matches!(train(&set, &[3]), Err(Error::TooManyComponents { max: 2, .. })));
    }

    #[test]
    fn own_mean_wins() {
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.0, 1.0, 0.0];
        let clf = SubspaceClassifier::new(3, vec![subspace(a.clone(), vec![]), subspace(b.clone(), vec![])]).unwrap();
        assert_eq!(classify_pixel(&a, &clf).unwrap(), 0);
        assert_eq!(classify_pixel(&b, &clf).unwrap(), 1);
        // equidistant: lowest index
        assert_eq!(classify_pixel(&[0.5, 0.5, 0.0], &clf).unwrap(), 0);
        assert!(classify_pixel(&[1.0], &clf).is_err());
    }

    #[test]
    fn compact_and_residual_forms_agree() {
        let s = 1.0 / 2f64.sqrt();
        let c = subspace(vec![0.2, 0.3, 0.5], vec![vec![s, -s, 0.0]]);
        let h = [0.1, 0.6, 0.3];
        assert!((c.score(&h) - c.residual(&h)).abs() < 1e-15);
    }

    #[test]
    fn constant_image_goes_to_point_mass_class() {
        let grid = Grid::new(6, 6).unwrap();
        let y = ValueSpace::cyclic(4).unwrap();
        let f = Image::constant(grid, y, 2).unwrap();
        let mut means = vec![vec![0.0; 4]; 3];
        for (k, m) in means.iter_mut().enumerate() {
            m[k + 1] = 1.0;
        }
        let clf = SubspaceClassifier::new(4, means.into_iter().map(|m| subspace(m, vec![])).collect()).unwrap();
        let w = WeightingFunction::square(grid, 1).unwrap();
        let labels = classify_image(&f, &w, &clf, &FilterPlan::noncyclic()).unwrap();
        assert!(labels.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn confusion_basics() {
        let grid = Grid::new(2, 2).unwrap();
        let truth = LabelMap::new(grid, 2, vec![0, 0, 1, 1]).unwrap();
        let same = evaluate(&truth, &truth, &[]).unwrap();
        assert_eq!(same.percentages(), vec![vec![100.0, 0.0], vec![0.0, 100.0]]);
        let ones = LabelMap::new(grid, 2, vec![0, 0, 0, 0]).unwrap();
        let c = evaluate(&ones, &truth, &[]).unwrap();
        assert_eq!(c.percentages(), vec![vec![100.0, 0.0], vec![100.0, 0.0]]);
        let ignored = evaluate(&ones, &truth, &[1]).unwrap();
        assert_eq!(ignored.num_classes(), 2);
        assert_eq!(ignored.support(1), 0);
        assert_eq!(ignored.rounded_percentages()[1], vec![0, 0]);
    }

    #[test]
    fn erosion_keeps_only_region_interiors() {
        let grid = Grid::new(8, 5).unwrap();
        let truth = LabelMap::from_fn(grid, 2, |p| usize::from(p.col >= 4)).unwrap();
        let e = erode_labels(&truth, 1, 2).unwrap();
        assert_eq!(e.num_labels(), 3);
        let kept: Vec<_> = grid.points().filter(|&p| e.get(p) != 2).collect();
        assert_eq!(kept.len(), 2 * 3 * 2);
        assert!(kept.iter().all(|p| (1..=3).contains(&p.row) && [1, 2, 5, 6].contains(&p.col)));
        let c = evaluate(&truth, &e, &[2]).unwrap();
        assert_eq!(c.num_classes(), 2);
        assert_eq!(c.diagonal(), vec![100.0, 100.0]);
    }

    #[test]
    fn rounded_rows_sum_to_100() {
        let c = ConfusionMatrix::from_counts(vec![vec![1, 1, 1], vec![2, 0, 1], vec![0, 0, 7]]).unwrap();
        for row in c.rounded_percentages() {
            assert_eq!(row.iter().sum::<u64>(), 100);
        }
        let table = c.to_table(&["Ca".into(), "Co".into(), "Ps".into()]);
        assert!(table.lines().nth(1).unwrap().starts_with("Ca"));
    }
}
