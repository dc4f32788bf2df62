//! Building occlusion models out of simpler ones.
//!
//! An *expansion* `Φ ⋆ Ψ` stamps an independently drawn blob from `Ψ` at every
//! pixel where a binary seed model `Φ` is on; the result is the union of the
//! stamped blobs. An *overlay* combines two models through a binary mask:
//! pixels where the mask is 0 take the top model's label, the rest take the
//! bottom model's label shifted past the top model's labels.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{Grid, Offset, Point};
use crate::image::{Image, LabelMap};
use crate::occlusion::{
    self, EstimateMethod, MarginalField, OcclusionModel, Representation, Support, ENUMERATION_CAP,
};
use crate::rng;

/// Distribution of the blob stamped at each seed pixel.
#[derive(Clone, Debug, PartialEq)]
pub enum BlobDistribution {
    /// Explicit shapes given as offsets from the seed pixel.
    Table(Vec<(Vec<Offset>, f64)>),
    /// Euclidean disks `{o : |o|² ≤ r²}` with a distribution over `r`.
    Disk(Vec<(usize, f64)>),
}

fn check_weights<'a>(probs: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut total = 0.0;
    for &p in probs {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidDistribution(format!("{p} is not a probability")));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!(
            "blob probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

pub fn disk_offsets(radius: usize) -> Vec<Offset> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            let o = Offset::new(dr, dc);
            if o.norm_sq() <= radius * radius {
                out.push(o);
            }
        }
    }
    out
}

impl BlobDistribution {
    pub fn table(entries: Vec<(Vec<Offset>, f64)>) -> Result<Self> {
        if entries.iter().any(|(shape, _)| shape.is_empty()) {
            return Err(Error::InvalidDistribution("blobs must be nonempty".into()));
        }
        check_weights(entries.iter().map(|(_, p)| p))?;
        Ok(BlobDistribution::Table(entries))
    }

    pub fn disk(radii: Vec<(usize, f64)>) -> Result<Self> {
        check_weights(radii.iter().map(|(_, p)| p))?;
        Ok(BlobDistribution::Disk(radii))
    }

    /// The single-pixel blob; expanding by it leaves the seed unchanged.
    pub fn point() -> Self {
        BlobDistribution::Table(vec![(vec![Offset::ZERO], 1.0)])
    }

    pub fn shapes(&self) -> Vec<(Vec<Offset>, f64)> {
        match self {
            BlobDistribution::Table(t) => t.clone(),
            BlobDistribution::Disk(radii) => radii.iter().map(|&(r, p)| (disk_offsets(r), p)).collect(),
        }
    }

    pub fn max_radius(&self) -> usize {
        self.shapes()
            .iter()
            .flat_map(|(s, _)| s.iter().map(|o| o.radius()))
            .max()
            .unwrap_or(0)
    }

    /// Blobs wrapped onto `grid` as sorted cell-index sets, with identical
    /// sets merged and zero-probability shapes dropped.
    pub fn on_grid(&self, grid: Grid) -> Vec<(Vec<usize>, f64)> {
        let mut merged: Vec<(Vec<usize>, f64)> = Vec::new();
        for (shape, p) in self.shapes() {
            if p <= 0.0 {
                continue;
            }
            let mut cells: Vec<usize> = shape
                .iter()
                .map(|&o| grid.index(grid.offset_point(o)))
                .collect();
            cells.sort_unstable();
            cells.dedup();
            match merged.iter_mut().find(|(c, _)| *c == cells) {
                Some(entry) => entry.1 += p,
                None => merged.push((cells, p)),
            }
        }
        merged
    }

    /// `Ψ̄(o)`: probability that the blob covers offset `o`, per grid point.
    pub fn coverage(&self, grid: Grid) -> Vec<f64> {
        let mut q = vec![0.0; grid.len()];
        for (cells, p) in self.on_grid(grid) {
            for c in cells {
                q[c] += p;
            }
        }
        q
    }
}

/// `Φ ⋆ Ψ` with a binary seed model `Φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionModel {
    pub seed: OcclusionModel,
    pub blobs: BlobDistribution,
}

impl ExpansionModel {
    pub fn new(seed: OcclusionModel, blobs: BlobDistribution) -> Result<Self> {
        if seed.num_labels() != 2 {
            return Err(Error::InvalidArgument(format!(
                "expansion seeds must be binary, got N = {}",
                seed.num_labels()
            )));
        }
        Ok(ExpansionModel { seed, blobs })
    }

    pub fn grid(&self) -> Grid {
        self.seed.grid()
    }

    /// Number of (seed map, blob assignment) combinations to enumerate.
    pub fn enumeration_size(&self) -> u128 {
        let per_center = self.blobs.on_grid(self.grid()).len() as u128;
        if self.seed.enumeration_size() > ENUMERATION_CAP {
            return u128::MAX;
        }
        let Ok(support) = self.seed.support(ENUMERATION_CAP) else {
            return u128::MAX;
        };
        support.iter().fold(0u128, |acc, (phi, _)| {
            let k = phi.count(1) as u32;
            acc.saturating_add(per_center.checked_pow(k).unwrap_or(u128::MAX))
        })
    }
}

impl OcclusionModel {
    pub fn expansion(seed: OcclusionModel, blobs: BlobDistribution) -> Result<OcclusionModel> {
        let e = ExpansionModel::new(seed, blobs)?;
        Ok(OcclusionModel::from_parts(e.grid(), 2, Representation::Expansion(Box::new(e))))
    }

    pub fn overlay(top: OcclusionModel, bottom: OcclusionModel, mask: OcclusionModel) -> Result<OcclusionModel> {
        let o = OverlayModel::new(top, bottom, mask)?;
        let n = o.num_labels();
        Ok(OcclusionModel::from_parts(o.top.grid(), n, Representation::Overlay(Box::new(o))))
    }
}

fn stamp(grid: Grid, centers: &[usize], blobs: &[&[usize]]) -> Vec<u32> {
    let mut labels = vec![0u32; grid.len()];
    for (&c, cells) in centers.iter().zip(blobs) {
        let cp = grid.point(c);
        for &cell in cells.iter() {
            labels[grid.index(grid.add(cp, grid.point(cell)))] = 1;
        }
    }
    labels
}

/// `⋃_{φ(x) = 1} T^x ψ_x`, with `blobs[i]` the shape at flat pixel index `i`.
/// Shapes at pixels where `φ` is off are ignored.
pub fn expand_label_map(phi: &LabelMap, blobs: &[Vec<Offset>]) -> Result<LabelMap> {
    let grid = phi.grid();
    if phi.num_labels() != 2 {
        return Err(Error::InvalidArgument("expansion seeds must be binary".into()));
    }
    if blobs.len() != grid.len() {
        return Err(Error::CountMismatch {
            expected: grid.len(),
            found: blobs.len(),
        });
    }
    let centers: Vec<usize> = (0..grid.len()).filter(|&i| phi.labels()[i] == 1).collect();
    let cells: Vec<Vec<usize>> = centers
        .iter()
        .map(|&c| blobs[c].iter().map(|&o| grid.index(grid.offset_point(o))).collect())
        .collect();
    let refs: Vec<&[usize]> = cells.iter().map(Vec::as_slice).collect();
    LabelMap::new(grid, 2, stamp(grid, &centers, &refs))
}

pub fn sample_expansion(e: &ExpansionModel, seed: u64) -> LabelMap {
    let grid = e.grid();
    let phi = e.seed.sample(rng::derive(seed, 1));
    let shapes = e.blobs.on_grid(grid);
    let blob_seed = rng::derive(seed, 2);
    let centers: Vec<usize> = (0..grid.len()).filter(|&i| phi.labels()[i] == 1).collect();
    let chosen: Vec<&[usize]> = centers
        .iter()
        .map(|&c| {
            let u = rng::unit(&mut rng::stream(blob_seed, c as u64));
            shapes[rng::categorical(shapes.iter().map(|(_, p)| *p), u)].0.as_slice()
        })
        .collect();
    LabelMap::new(grid, 2, stamp(grid, &centers, &chosen)).expect("stamped labels are binary")
}

/// Exact `P_{Φ⋆Ψ}` by enumerating seed maps and per-center blob choices.
pub fn expansion_pdf(e: &ExpansionModel, cap: u128) -> Result<Support> {
    let required = e.enumeration_size();
    if required > cap {
        return Err(Error::EnumerationCap { required, cap });
    }
    let grid = e.grid();
    let shapes = e.blobs.on_grid(grid);
    let mut table: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for (phi, p) in e.seed.support(cap)? {
        let centers: Vec<usize> = (0..grid.len()).filter(|&i| phi.labels()[i] == 1).collect();
        let mut choice = vec![0usize; centers.len()];
        loop {
            let prob = choice.iter().fold(p, |acc, &b| acc * shapes[b].1);
            let refs: Vec<&[usize]> = choice.iter().map(|&b| shapes[b].0.as_slice()).collect();
            *table.entry(stamp(grid, &centers, &refs)).or_insert(0.0) += prob;
            // mixed-radix increment over blob choices
            let mut i = 0;
            while i < choice.len() {
                choice[i] += 1;
                if choice[i] < shapes.len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
            if i == choice.len() {
                break;
            }
        }
    }
    Ok(table
        .into_iter()
        .map(|(labels, p)| (LabelMap::new(grid, 2, labels).expect("binary"), p))
        .collect())
}

/// `(a ⊛ b)(x) = Σ_c a(c) b(x − c)` on the torus.
pub fn cyclic_convolve(grid: Grid, a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|xi| {
            let x = grid.point(xi);
            (0..grid.len())
                .filter(|&c| a[c] != 0.0)
                .map(|c| a[c] * b[grid.index(grid.sub(x, grid.point(c)))])
                .sum()
        })
        .collect()
}

/// Closed-form marginals when available.
///
/// With an i.i.d. seed, a pixel is uncovered exactly when no center covers
/// it, and centers act independently, so `P(σ(x) = 0) = Π_o (1 − ρ Ψ̄(o))`
/// whether or not blobs overlap. With any other seed whose support can be
/// enumerated and whose blobs provably never overlap, the mean field is the
/// cyclic convolution of the seed's and the blob's mean fields.
pub(crate) fn expansion_marginals_analytic(e: &ExpansionModel) -> Option<MarginalField> {
    let grid = e.grid();
    let q = e.blobs.coverage(grid);
    if let Representation::IidSpinner(p) = e.seed.representation() {
        let rho = p[1];
        let uncovered: f64 = q.iter().map(|&qo| 1.0 - rho * qo).product();
        return Some(MarginalField::uniform(grid, &[uncovered, 1.0 - uncovered], EstimateMethod::Analytic));
    }
    if e.seed.enumeration_size() > ENUMERATION_CAP {
        return None;
    }
    let report = check_effective_disjointness(e, DisjointnessCheck::Exhaustive { cap: ENUMERATION_CAP }).ok()?;
    if !report.disjoint {
        return None;
    }
    let seed_field = occlusion::exact_marginal_field(&e.seed, ENUMERATION_CAP).ok()?;
    let on = cyclic_convolve(grid, &seed_field.label_plane(1), &q);
    let probs = on.iter().flat_map(|&v| [1.0 - v, v]).collect();
    MarginalField::new(grid, 2, probs, EstimateMethod::Analytic).ok()
}

#[derive(Clone, Copy, Debug)]
pub enum DisjointnessCheck {
    /// Every seed map in the support against every pair of blob choices.
    Exhaustive { cap: u128 },
    /// Random seed maps only; can find overlaps but cannot prove their absence.
    Sampled { trials: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisjointnessReport {
    pub disjoint: bool,
    /// `true` when the verdict covers the whole support.
    pub certified: bool,
    pub maps_checked: usize,
    /// A seed map and two of its centers whose blobs can overlap.
    pub violation: Option<(LabelMap, Point, Point)>,
}

/// Offsets `d` such that blobs stamped at `c` and `c + d` can share a cell.
fn collision_offsets(grid: Grid, shapes: &[(Vec<usize>, f64)]) -> Vec<Point> {
    let mut hit = vec![false; grid.len()];
    for (a, _) in shapes {
        for (b, _) in shapes {
            for &ca in a {
                for &cb in b {
                    hit[grid.index(grid.sub(grid.point(ca), grid.point(cb)))] = true;
                }
            }
        }
    }
    hit[0] = false;
    (0..grid.len()).filter(|&i| hit[i]).map(|i| grid.point(i)).collect()
}

fn first_collision(phi: &LabelMap, collisions: &[Point]) -> Option<(Point, Point)> {
    let grid = phi.grid();
    for c in grid.points() {
        if phi.get(c) != 1 {
            continue;
        }
        for &d in collisions {
            let other = grid.add(c, d);
            if phi.get(other) == 1 {
                return Some((c, other));
            }
        }
    }
    None
}

/// Decides whether stamped blobs can ever overlap.
pub fn check_effective_disjointness(e: &ExpansionModel, how: DisjointnessCheck) -> Result<DisjointnessReport> {
    let grid = e.grid();
    let collisions = collision_offsets(grid, &e.blobs.on_grid(grid));
    let (maps, certified): (Vec<LabelMap>, bool) = match how {
        DisjointnessCheck::Exhaustive { cap } => (
            e.seed.support(cap)?.into_iter().filter(|(_, p)| *p > 0.0).map(|(m, _)| m).collect(),
            true,
        ),
        DisjointnessCheck::Sampled { trials, seed } => (
            (0..trials).map(|i| e.seed.sample(rng::derive(seed, i as u64))).collect(),
            false,
        ),
    };
    let mut checked = 0;
    for phi in maps {
        checked += 1;
        if let Some((a, b)) = first_collision(&phi, &collisions) {
            return Ok(DisjointnessReport {
                disjoint: false,
                certified: true,
                maps_checked: checked,
                violation: Some((phi, a, b)),
            });
        }
    }
    Ok(DisjointnessReport {
        disjoint: true,
        certified,
        maps_checked: checked,
        violation: None,
    })
}

/// `Φ #_Σ Ψ`
#[derive(Clone, Debug, PartialEq)]
pub struct OverlayModel {
    pub top: OcclusionModel,
    pub bottom: OcclusionModel,
    pub mask: OcclusionModel,
}

impl OverlayModel {
    pub fn new(top: OcclusionModel, bottom: OcclusionModel, mask: OcclusionModel) -> Result<Self> {
        top.grid().check_same(&bottom.grid())?;
        top.grid().check_same(&mask.grid())?;
        if mask.num_labels() != 2 {
            return Err(Error::InvalidArgument(format!(
                "overlay masks must be binary, got N = {}",
                mask.num_labels()
            )));
        }
        Ok(OverlayModel { top, bottom, mask })
    }

    pub fn num_labels(&self) -> usize {
        self.top.num_labels() + self.bottom.num_labels()
    }

    pub fn enumeration_size(&self) -> u128 {
        self.top
            .enumeration_size()
            .saturating_mul(self.bottom.enumeration_size())
            .saturating_mul(self.mask.enumeration_size())
    }
}

/// `(φ #_σ ψ)(x)` is `φ(x)` where `σ(x) = 0` and `ψ(x) + N_φ` where `σ(x) = 1`.
pub fn overlay_label_map(phi: &LabelMap, psi: &LabelMap, sigma: &LabelMap) -> Result<LabelMap> {
    let grid = phi.grid();
    grid.check_same(&psi.grid())?;
    grid.check_same(&sigma.grid())?;
    if sigma.num_labels() != 2 {
        return Err(Error::InvalidArgument("overlay masks must be binary".into()));
    }
    let shift = phi.num_labels() as u32;
    let labels = (0..grid.len())
        .map(|i| match sigma.labels()[i] {
            0 => phi.labels()[i],
            _ => psi.labels()[i] + shift,
        })
        .collect();
    LabelMap::new(grid, phi.num_labels() + psi.num_labels(), labels)
}

pub fn sample_overlay(o: &OverlayModel, seed: u64) -> LabelMap {
    let phi = o.top.sample(rng::derive(seed, 1));
    let psi = o.bottom.sample(rng::derive(seed, 2));
    let sigma = o.mask.sample(rng::derive(seed, 3));
    overlay_label_map(&phi, &psi, &sigma).expect("children share a grid")
}

/// Exact `P_{Φ#_ΣΨ}` by enumerating all three children.
pub fn overlay_pdf(o: &OverlayModel, cap: u128) -> Result<Support> {
    let required = o.enumeration_size();
    if required > cap {
        return Err(Error::EnumerationCap { required, cap });
    }
    let (top, bottom, mask) = (o.top.support(cap)?, o.bottom.support(cap)?, o.mask.support(cap)?);
    let mut table: BTreeMap<LabelMap, f64> = BTreeMap::new();
    for (sigma, ps) in &mask {
        for (phi, pt) in &top {
            for (psi, pb) in &bottom {
                *table.entry(overlay_label_map(phi, psi, sigma)?).or_insert(0.0) += pt * pb * ps;
            }
        }
    }
    Ok(table.into_iter().collect())
}

/// Marginals of an overlay of independent children:
/// `1̄(x, n) = 1̄_Φ(x, n) 1̄_Σ(x, 0)` for `n < N_Φ` and
/// `1̄_Ψ(x, n − N_Φ) 1̄_Σ(x, 1)` otherwise.
pub fn overlay_marginals(
    top: &MarginalField,
    bottom: &MarginalField,
    mask: &MarginalField,
    method: EstimateMethod,
) -> MarginalField {
    let grid = top.grid();
    let nt = top.num_labels();
    let probs = (0..grid.len())
        .flat_map(|x| {
            let below = (0..nt).map(move |n| top.get(x, n) * mask.get(x, 0));
            let above = (0..bottom.num_labels()).map(move |n| bottom.get(x, n) * mask.get(x, 1));
            below.chain(above)
        })
        .collect();
    MarginalField::new(grid, nt + bottom.num_labels(), probs, method).expect("sizes agree")
}

/// One textured image drawn from `model` with the given sources, along with
/// the label map that produced it.
pub fn synthesize_texture(model: &OcclusionModel, sources: &[Image], seed: u64) -> Result<(Image, LabelMap)> {
    let phi = model.sample(seed);
    let img = occlusion::occlude(sources, &phi)?;
    Ok((img, phi))
}
