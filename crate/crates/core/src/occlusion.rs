//! Occlusion models: probability distributions over label functions
//! `φ : X → Z_N`, the composites they produce, their average characteristic
//! functions, and the expected-local-histogram decomposition.
//!
//! The central quantity is the marginal field
//!
//! `1̄_Φ(x, n) = Σ_{φ(x) = n} P_Φ(φ)`,
//!
//! the probability that the model assigns label `n` at `x`. A model is *flat*
//! when this does not depend on `x`, in which case the expected local
//! histogram of a composite is exactly `Σ_n λ_n LH_w f_n`. For non-flat models
//! the defect is bounded pixelwise by
//! `Σ_n Σ_{x'} w(x') |1̄_Φ(x + x', n) − 1̄_Φ(x, n)|`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::cube::HistCube;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::histogram::{local_histogram, FilterPlan};
use crate::image::{Image, LabelMap};
use crate::rng;
use crate::texture::{self, ExpansionModel, OverlayModel};
use crate::window::WeightingFunction;

/// Largest support that the exact (enumerating) paths will walk.
pub const ENUMERATION_CAP: u128 = 1 << 20;

const MASS_TOL: f64 = 1e-12;

/// An explicit probability table: `(label map, probability)` pairs.
pub type Support = Vec<(LabelMap, f64)>;

/// One translation orbit of a class-table model.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitClass {
    pub representative: LabelMap,
    /// Probability of each individual member of the orbit.
    pub member_probability: f64,
    pub members: Vec<LabelMap>,
}

impl OrbitClass {
    pub fn mass(&self) -> f64 {
        self.member_probability * self.members.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    /// Sparse table of the maps with nonzero probability.
    Table(Support),
    /// Independent per-pixel draws from one categorical distribution.
    IidSpinner(Vec<f64>),
    /// Translation orbits, every member sharing its orbit's probability.
    ClassTable(Vec<OrbitClass>),
    Expansion(Box<ExpansionModel>),
    Overlay(Box<OverlayModel>),
}

/// A distribution `P_Φ` over `ℓ(X, Z_N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionModel {
    grid: Grid,
    num_labels: usize,
    repr: Representation,
}

fn check_probability(p: f64) -> Result<()> {
    if !(p.is_finite() && (0.0..=1.0 + MASS_TOL).contains(&p)) {
        return Err(Error::InvalidDistribution(format!("{p} is not a probability")));
    }
    Ok(())
}

fn check_mass(total: f64) -> Result<()> {
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

impl OcclusionModel {
    /// An explicit table. Duplicate maps are merged and zero entries dropped.
    pub fn table(grid: Grid, num_labels: usize, entries: Support) -> Result<Self> {
        let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut merged: Support = Vec::new();
        for (map, p) in entries {
            check_probability(p)?;
            grid.check_same(&map.grid())?;
            if map.num_labels() > num_labels {
                return Err(Error::LabelOutOfRange {
                    label: map.num_labels() - 1,
                    num_labels,
                });
            }
            let map = map.with_num_labels(num_labels)?;
            match index.get(map.labels()) {
                Some(&i) => merged[i].1 += p,
                None => {
                    index.insert(map.labels().to_vec(), merged.len());
                    merged.push((map, p));
                }
            }
        }
        check_mass(merged.iter().map(|(_, p)| p).sum())?;
        merged.retain(|(_, p)| *p > 0.0);
        Ok(OcclusionModel {
            grid,
            num_labels,
            repr: Representation::Table(merged),
        })
    }

    /// All mass on one label map.
    pub fn deterministic(map: LabelMap) -> Self {
        OcclusionModel {
            grid: map.grid(),
            num_labels: map.num_labels(),
            repr: Representation::Table(vec![(map, 1.0)]),
        }
    }

    pub fn iid_spinner(grid: Grid, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("spinner needs at least one label".into()));
        }
        for &p in &probs {
            check_probability(p)?;
        }
        check_mass(probs.iter().sum())?;
        Ok(OcclusionModel {
            grid,
            num_labels: probs.len(),
            repr: Representation::IidSpinner(probs),
        })
    }

    /// Independent coin flips with `P(φ(x) = 1) = ρ`.
    pub fn coin(grid: Grid, rho: f64) -> Result<Self> {
        Self::iid_spinner(grid, vec![1.0 - rho, rho])
    }

    /// Orbit classes given as `(representative, probability of each member)`.
    pub fn class_table(grid: Grid, num_labels: usize, classes: Vec<(LabelMap, f64)>) -> Result<Self> {
        let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
        let mut out = Vec::with_capacity(classes.len());
        for (rep, p) in classes {
            check_probability(p)?;
            grid.check_same(&rep.grid())?;
            let rep = rep.with_num_labels(num_labels)?;
            let members = rep.orbit();
            for m in &members {
                if !seen.insert(m.labels().to_vec()) {
                    return Err(Error::InvalidDistribution(
                        "two class representatives share a translation orbit".into(),
                    ));
                }
            }
            out.push(OrbitClass {
                representative: rep,
                member_probability: p,
                members,
            });
        }
        check_mass(out.iter().map(OrbitClass::mass).sum())?;
        Ok(OcclusionModel {
            grid,
            num_labels,
            repr: Representation::ClassTable(out),
        })
    }

    /// Orbit classes given as `(representative, total mass of the orbit)`.
    pub fn class_table_from_masses(
        grid: Grid,
        num_labels: usize,
        classes: Vec<(LabelMap, f64)>,
    ) -> Result<Self> {
        let per_member = classes
            .into_iter()
            .map(|(rep, mass)| {
                let size = rep.orbit().len() as f64;
                (rep, mass / size)
            })
            .collect();
        Self::class_table(grid, num_labels, per_member)
    }

    /// Independent pixels with pixel-dependent label distributions, tabulated
    /// by enumeration. Useful for deliberately non-flat models.
    pub fn pixelwise(grid: Grid, probs: &[Vec<f64>]) -> Result<Self> {
        if probs.len() != grid.len() {
            return Err(Error::InvalidDistribution(format!(
                "expected {} per-pixel distributions, got {}",
                grid.len(),
                probs.len()
            )));
        }
        let num_labels = probs.iter().map(Vec::len).max().unwrap_or(0);
        for row in probs {
            row.iter().try_for_each(|&p| check_probability(p))?;
            check_mass(row.iter().sum())?;
        }
        let required: u128 = probs
            .iter()
            .map(|row| row.iter().filter(|&&p| p > 0.0).count() as u128)
            .try_fold(1u128, |acc, k| acc.checked_mul(k))
            .unwrap_or(u128::MAX);
        if required > ENUMERATION_CAP {
            return Err(Error::EnumerationCap {
                required,
                cap: ENUMERATION_CAP,
            });
        }
        // extend one pixel at a time, last pixel varying fastest
        let mut partial: Vec<(Vec<u32>, f64)> = vec![(Vec::with_capacity(grid.len()), 1.0)];
        for row in probs {
            let mut next = Vec::with_capacity(partial.len() * row.len());
            for (labels, p) in &partial {
                for (n, &q) in row.iter().enumerate() {
                    if q > 0.0 {
                        let mut l = labels.clone();
                        l.push(n as u32);
                        next.push((l, p * q));
                    }
                }
            }
            partial = next;
        }
        let support = partial
            .into_iter()
            .map(|(l, p)| (LabelMap::from_raw(grid, num_labels, l), p))
            .collect();
        Self::table(grid, num_labels, support)
    }

    pub(crate) fn from_parts(grid: Grid, num_labels: usize, repr: Representation) -> Self {
        OcclusionModel {
            grid,
            num_labels,
            repr,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn kind(&self) -> &'static str {
        match self.repr {
            Representation::Table(_) => "table",
            Representation::IidSpinner(_) => "iid_spinner",
            Representation::ClassTable(_) => "class_table",
            Representation::Expansion(_) => "expansion",
            Representation::Overlay(_) => "overlay",
        }
    }

    /// Number of label maps the exact paths would have to visit.
    pub fn enumeration_size(&self) -> u128 {
        match &self.repr {
            Representation::Table(t) => t.len() as u128,
            Representation::IidSpinner(p) => {
                let k = p.iter().filter(|&&q| q > 0.0).count() as u128;
                k.checked_pow(self.grid.len() as u32).unwrap_or(u128::MAX)
            }
            Representation::ClassTable(c) => c.iter().map(|c| c.members.len() as u128).sum(),
            Representation::Expansion(e) => e.enumeration_size(),
            Representation::Overlay(o) => o.enumeration_size(),
        }
    }

    /// The exact probability table, refusing supports beyond `cap`.
    pub fn support(&self, cap: u128) -> Result<Support> {
        let required = self.enumeration_size();
        if required > cap {
            return Err(Error::EnumerationCap { required, cap });
        }
        Ok(match &self.repr {
            Representation::Table(t) => t.clone(),
            Representation::IidSpinner(p) => {
                let rows = vec![p.clone(); self.grid.len()];
                match OcclusionModel::pixelwise(self.grid, &rows)?.repr {
                    Representation::Table(t) => t,
                    _ => unreachable!(),
                }
            }
            Representation::ClassTable(classes) => classes
                .iter()
                .flat_map(|c| c.members.iter().map(|m| (m.clone(), c.member_probability)))
                .collect(),
            Representation::Expansion(e) => texture::expansion_pdf(e, cap)?,
            Representation::Overlay(o) => texture::overlay_pdf(o, cap)?,
        })
    }

    /// Draws one label map. Deterministic in `seed`.
    pub fn sample(&self, seed: u64) -> LabelMap {
        match &self.repr {
            Representation::Table(t) => {
                let u = rng::unit(&mut rng::global(seed));
                let i = rng::categorical(t.iter().map(|(_, p)| *p), u);
                t[i].0.clone()
            }
            Representation::IidSpinner(p) => {
                let labels = (0..self.grid.len())
                    .into_par_iter()
                    .map(|i| {
                        let u = rng::unit(&mut rng::stream(seed, i as u64));
                        rng::categorical(p.iter().copied(), u) as u32
                    })
                    .collect();
                LabelMap::from_raw(self.grid, self.num_labels, labels)
            }
            Representation::ClassTable(classes) => {
                let mut r = rng::global(seed);
                let u = rng::unit(&mut r);
                let c = &classes[rng::categorical(classes.iter().map(OrbitClass::mass), u)];
                let k = ((rng::unit(&mut r) * c.members.len() as f64) as usize).min(c.members.len() - 1);
                c.members[k].clone()
            }
            Representation::Expansion(e) => texture::sample_expansion(e, seed),
            Representation::Overlay(o) => texture::sample_overlay(o, seed),
        }
    }
}

/// `sample_label_map`: free-function form of [`OcclusionModel::sample`].
pub fn sample_label_map(model: &OcclusionModel, seed: u64) -> LabelMap {
    model.sample(seed)
}

/// `(occ_φ {f_n})(x) = f_{φ(x)}(x)`
pub fn occlude(sources: &[Image], phi: &LabelMap) -> Result<Image> {
    if sources.len() != phi.num_labels() {
        return Err(Error::CountMismatch {
            expected: phi.num_labels(),
            found: sources.len(),
        });
    }
    let first = &sources[0];
    for s in sources {
        first.grid().check_same(&s.grid())?;
        if s.values() != first.values() {
            return Err(Error::ValueSpaceMismatch {
                expected: first.values().size(),
                found: s.values().size(),
            });
        }
    }
    first.grid().check_same(&phi.grid())?;
    let pixels = phi
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| sources[l as usize].pixels()[i])
        .collect();
    Image::new(first.grid(), first.values().clone(), pixels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EstimateMethod {
    Exact,
    Analytic,
    MonteCarlo { samples: usize },
}

impl EstimateMethod {
    fn worst(self, other: EstimateMethod) -> EstimateMethod {
        self.max(other)
    }
}

/// `1̄_Φ(x, n)`, stored pixel-major (`probs[x * N + n]`).
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalField {
    grid: Grid,
    num_labels: usize,
    probs: Vec<f64>,
    method: EstimateMethod,
    /// Per-entry standard error, present for Monte Carlo estimates.
    std_error: Option<Vec<f64>>,
}

impl MarginalField {
    pub fn new(grid: Grid, num_labels: usize, probs: Vec<f64>, method: EstimateMethod) -> Result<Self> {
        if probs.len() != grid.len() * num_labels {
            return Err(Error::InvalidArgument("marginal field has the wrong size".into()));
        }
        Ok(MarginalField {
            grid,
            num_labels,
            probs,
            method,
            std_error: None,
        })
    }

    /// The same value at every pixel.
    pub fn uniform(grid: Grid, lambdas: &[f64], method: EstimateMethod) -> Self {
        let probs = (0..grid.len()).flat_map(|_| lambdas.iter().copied()).collect();
        MarginalField {
            grid,
            num_labels: lambdas.len(),
            probs,
            method,
            std_error: None,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn method(&self) -> EstimateMethod {
        self.method
    }

    pub fn std_error(&self) -> Option<&[f64]> {
        self.std_error.as_deref()
    }

    pub fn get(&self, x: usize, n: usize) -> f64 {
        self.probs[x * self.num_labels + n]
    }

    pub fn at(&self, x: usize) -> &[f64] {
        &self.probs[x * self.num_labels..(x + 1) * self.num_labels]
    }

    /// The plane `x ↦ 1̄_Φ(x, n)`.
    pub fn label_plane(&self, n: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|x| self.get(x, n)).collect()
    }

    pub fn max_std_error(&self) -> f64 {
        self.std_error
            .as_ref()
            .map(|s| s.iter().copied().fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    /// Largest deviation of any per-pixel row sum from one.
    pub fn normalization_error(&self) -> f64 {
        (0..self.grid.len())
            .map(|x| (self.at(x).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Tuning for [`marginal_field_with`].
#[derive(Clone, Copy, Debug)]
pub struct MarginalOptions {
    pub cap: u128,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for MarginalOptions {
    fn default() -> Self {
        MarginalOptions {
            cap: ENUMERATION_CAP,
            mc_samples: 10_000,
            seed: 0,
        }
    }
}

/// Marginals by summing over an explicit support, in support order.
pub fn marginals_from_support(grid: Grid, num_labels: usize, support: &[(LabelMap, f64)]) -> MarginalField {
    let mut probs = vec![0.0; grid.len() * num_labels];
    for (map, p) in support {
        for (x, &l) in map.labels().iter().enumerate() {
            probs[x * num_labels + l as usize] += p;
        }
    }
    MarginalField {
        grid,
        num_labels,
        probs,
        method: EstimateMethod::Exact,
        std_error: None,
    }
}

/// Exact marginals by enumeration; errors when the support exceeds `cap`.
pub fn exact_marginal_field(model: &OcclusionModel, cap: u128) -> Result<MarginalField> {
    let support = model.support(cap)?;
    Ok(marginals_from_support(model.grid(), model.num_labels(), &support))
}

/// Monte Carlo marginals from `samples` independent draws.
pub fn monte_carlo_marginal_field(model: &OcclusionModel, samples: usize, seed: u64) -> Result<MarginalField> {
    if samples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
    }
    let grid = model.grid();
    let n = model.num_labels();
    let counts = (0..samples)
        .into_par_iter()
        .fold(
            || vec![0u64; grid.len() * n],
            |mut acc, i| {
                let phi = model.sample(rng::derive(seed, i as u64));
                for (x, &l) in phi.labels().iter().enumerate() {
                    acc[x * n + l as usize] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; grid.len() * n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let s = samples as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / s).collect();
    let std_error = probs.iter().map(|&p| (p * (1.0 - p) / s).sqrt()).collect();
    Ok(MarginalField {
        grid,
        num_labels: n,
        probs,
        method: EstimateMethod::MonteCarlo { samples },
        std_error: Some(std_error),
    })
}

/// `1̄_Φ` using the best available route: closed forms where the model has
/// them, enumeration when the support fits under the cap, Monte Carlo
/// otherwise.
pub fn marginal_field_with(model: &OcclusionModel, opts: &MarginalOptions) -> Result<MarginalField> {
    match model.representation() {
        Representation::IidSpinner(p) => Ok(MarginalField::uniform(model.grid(), p, EstimateMethod::Analytic)),
        Representation::Table(_) | Representation::ClassTable(_) => exact_marginal_field(model, opts.cap),
        Representation::Expansion(e) => {
            if let Some(field) = texture::expansion_marginals_analytic(e) {
                Ok(field)
            } else if model.enumeration_size() <= opts.cap {
                exact_marginal_field(model, opts.cap)
            } else {
                monte_carlo_marginal_field(model, opts.mc_samples, opts.seed)
            }
        }
        Representation::Overlay(o) => {
            let children = [&o.top, &o.bottom, &o.mask];
            let fields = children
                .iter()
                .map(|m| marginal_field_with(m, opts))
                .collect::<Result<Vec<_>>>()?;
            if fields.iter().any(|f| matches!(f.method, EstimateMethod::MonteCarlo { .. })) {
                return monte_carlo_marginal_field(model, opts.mc_samples, opts.seed);
            }
            let method = fields.iter().fold(EstimateMethod::Exact, |m, f| m.worst(f.method));
            Ok(texture::overlay_marginals(&fields[0], &fields[1], &fields[2], method))
        }
    }
}

pub fn marginal_field(model: &OcclusionModel) -> Result<MarginalField> {
    marginal_field_with(model, &MarginalOptions::default())
}

/// Outcome of a flatness check.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessCertificate {
    pub is_flat: bool,
    /// Per-label spatial means, reported when flat.
    pub lambdas: Option<Vec<f64>>,
    /// `max_{x,n} |1̄(x,n) − mean_x 1̄(·,n)|`
    pub max_deviation: f64,
    /// `max_n (max_x − min_x) 1̄(·,n)`; flatness is decided on this.
    pub max_spread: f64,
    pub tolerance: f64,
    pub method: EstimateMethod,
}

/// Default tolerance: `1e-9` for exact and analytic fields, four times the
/// largest standard error for Monte Carlo ones.
pub fn default_flatness_tolerance(field: &MarginalField) -> f64 {
    match field.method() {
        EstimateMethod::MonteCarlo { .. } => 4.0 * field.max_std_error(),
        _ => 1e-9,
    }
}

pub fn certify_flatness(field: &MarginalField, tol: f64) -> FlatnessCertificate {
    let n = field.num_labels();
    let len = field.grid().len();
    let mut means = vec![0.0; n];
    let mut spread: f64 = 0.0;
    for (label, mean) in means.iter_mut().enumerate() {
        let plane = field.label_plane(label);
        let (lo, hi) = plane
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        spread = spread.max(hi - lo);
        *mean = plane.iter().sum::<f64>() / len as f64;
    }
    let mut max_deviation: f64 = 0.0;
    for x in 0..len {
        for (label, mean) in means.iter().enumerate() {
            max_deviation = max_deviation.max((field.get(x, label) - mean).abs());
        }
    }
    let is_flat = spread <= tol;
    FlatnessCertificate {
        is_flat,
        lambdas: is_flat.then_some(means),
        max_deviation,
        max_spread: spread,
        tolerance: tol,
        method: field.method(),
    }
}

pub fn check_flatness(model: &OcclusionModel, tol: f64) -> Result<FlatnessCertificate> {
    Ok(certify_flatness(&marginal_field(model)?, tol))
}

/// Weighted sum of local histograms over a support, reduced in a fixed chunk
/// order so the result does not depend on the number of worker threads.
fn weighted_cube_sum(
    support: &[(LabelMap, f64)],
    sources: &[Image],
    w: &WeightingFunction,
    plan: &FilterPlan,
) -> Result<HistCube> {
    const CHUNK: usize = 64;
    let first = &sources[0];
    let partials = support
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = HistCube::zeros(first.grid(), first.values().clone());
            for (phi, p) in chunk {
                let cube = local_histogram(&occlude(sources, phi)?, w, plan)?;
                acc = HistCube::linear_combination(&[(1.0, &acc), (*p, &cube)])?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = HistCube::zeros(first.grid(), first.values().clone());
    for part in &partials {
        total = HistCube::linear_combination(&[(1.0, &total), (1.0, part)])?;
    }
    Ok(total)
}

fn check_sources(model: &OcclusionModel, sources: &[Image]) -> Result<()> {
    if sources.len() != model.num_labels() {
        return Err(Error::CountMismatch {
            expected: model.num_labels(),
            found: sources.len(),
        });
    }
    for s in sources {
        model.grid().check_same(&s.grid())?;
    }
    Ok(())
}

/// `E_Φ[LH_w occ_Φ {f_n}]`, summed exactly over the model's support.
pub fn expected_local_histogram(
    model: &OcclusionModel,
    sources: &[Image],
    w: &WeightingFunction,
    plan: &FilterPlan,
) -> Result<HistCube> {
    check_sources(model, sources)?;
    let support = model.support(ENUMERATION_CAP)?;
    weighted_cube_sum(&support, sources, w, plan)
}

/// Monte Carlo estimate of the expected local histogram.
pub fn expected_local_histogram_sampled(
    model: &OcclusionModel,
    sources: &[Image],
    w: &WeightingFunction,
    plan: &FilterPlan,
    samples: usize,
    seed: u64,
) -> Result<HistCube> {
    check_sources(model, sources)?;
    if samples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
    }
    let p = 1.0 / samples as f64;
    let support: Support = (0..samples)
        .map(|i| (model.sample(rng::derive(seed, i as u64)), p))
        .collect();
    weighted_cube_sum(&support, sources, w, plan)
}

/// `Σ_n 1̄_Φ(x, n) LH_w f_n(x, y)`
pub fn mixture_local_histogram(
    field: &MarginalField,
    sources: &[Image],
    w: &WeightingFunction,
    plan: &FilterPlan,
) -> Result<HistCube> {
    let first = &sources[0];
    let mut out = HistCube::zeros(first.grid(), first.values().clone());
    for (n, f) in sources.iter().enumerate() {
        let lh = local_histogram(f, w, plan)?;
        for y in 0..lh.num_levels() {
            let src = lh.level(y);
            for (x, o) in out.level_mut(y).iter_mut().enumerate() {
                *o += field.get(x, n) * src[x];
            }
        }
    }
    Ok(out)
}

/// Per-pixel bound `Σ_n Σ_{x'} w(x') |1̄(x + x', n) − 1̄(x, n)|` on the
/// decomposition error.
pub fn decomposition_bound(field: &MarginalField, w: &WeightingFunction) -> Vec<f64> {
    let grid = field.grid();
    (0..grid.len())
        .map(|xi| {
            let x = grid.point(xi);
            let mut total = 0.0;
            for n in 0..field.num_labels() {
                let here = field.get(xi, n);
                for (ti, &wt) in w.weights().iter().enumerate() {
                    if wt != 0.0 {
                        let there = grid.index(grid.add(x, grid.point(ti)));
                        total += wt * (field.get(there, n) - here).abs();
                    }
                }
            }
            total
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DecompositionReport {
    /// `ε(x, y)`
    pub epsilon: HistCube,
    /// Bound on `|ε(x, ·)|`, per pixel.
    pub bound: Vec<f64>,
    pub max_abs_epsilon: f64,
    pub max_bound: f64,
    /// Smallest `bound(x) − |ε(x, y)|` over all entries.
    pub min_slack: f64,
    pub holds: bool,
    pub marginals: MarginalField,
}

/// Enumerates the model to compare the expected local histogram with its
/// marginal-weighted mixture and checks the pixelwise bound on the gap.
pub fn verify_decomposition_bound(
    model: &OcclusionModel,
    sources: &[Image],
    w: &WeightingFunction,
) -> Result<DecompositionReport> {
    check_sources(model, sources)?;
    let plan = FilterPlan::direct();
    let support = model.support(ENUMERATION_CAP)?;
    let field = marginals_from_support(model.grid(), model.num_labels(), &support);
    let expected = weighted_cube_sum(&support, sources, w, &plan)?;
    let mixture = mixture_local_histogram(&field, sources, w, &plan)?;
    let epsilon = HistCube::linear_combination(&[(1.0, &expected), (-1.0, &mixture)])?;
    let bound = decomposition_bound(&field, w);
    let n = model.grid().len();
    let mut max_abs_epsilon: f64 = 0.0;
    let mut min_slack = f64::INFINITY;
    for y in 0..epsilon.num_levels() {
        for (x, &e) in epsilon.level(y).iter().enumerate() {
            max_abs_epsilon = max_abs_epsilon.max(e.abs());
            min_slack = min_slack.min(bound[x] - e.abs());
        }
    }
    debug_assert_eq!(bound.len(), n);
    let max_bound = bound.iter().copied().fold(0.0, f64::max);
    Ok(DecompositionReport {
        holds: min_slack >= -1e-12,
        epsilon,
        bound,
        max_abs_epsilon,
        max_bound,
        min_slack,
        marginals: field,
    })
}

/// `max |P(T^s σ) − P(σ)|` over the support and every shift `s`; maps missing
/// from the support count as probability zero.
pub fn translation_invariance_defect(support: &[(LabelMap, f64)]) -> f64 {
    let table: BTreeMap<&[u32], f64> = support.iter().map(|(m, p)| (m.labels(), *p)).collect();
    let mut worst: f64 = 0.0;
    for (map, p) in support {
        for s in map.grid().points() {
            let t = map.translate(s);
            let q = table.get(t.labels()).copied().unwrap_or(0.0);
            worst = worst.max((q - p).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueSpace;

    fn g(w: usize, h: usize) -> Grid {
        Grid::new(w, h).unwrap()
    }

    #[test]
    fn occlude_with_constant_labels() {
        let grid = g(2, 2);
        let y = ValueSpace::cyclic(8).unwrap();
        let f0 = Image::new(grid, y.clone(), vec![0, 1, 2, 3]).unwrap();
        let f1 = Image::new(grid, y, vec![4, 5, 6, 7]).unwrap();
        let zero = LabelMap::constant(grid, 2, 0).unwrap();
        assert_eq!(occlude(&[f0.clone(), f1.clone()], &zero).unwrap(), f0);
        let phi = LabelMap::new(grid, 2, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(occlude(&[f0.clone(), f1.clone()], &phi).unwrap().pixels(), &[0, 5, 6, 3]);
        assert!(matches!(occlude(&[f0], &phi), Err(Error::CountMismatch { .. })));
    }

    #[test]
    fn all_sixteen_composites() {
        let grid = g(2, 2);
        let y = ValueSpace::cyclic(8).unwrap();
        let f0 = Image::new(grid, y.clone(), vec![0, 1, 2, 3]).unwrap();
        let f1 = Image::new(grid, y, vec![4, 5, 6, 7]).unwrap();
        let mut seen = BTreeSet::new();
        for i in 0..16u128 {
            let phi = LabelMap::nth(grid, 2, i);
            let c = occlude(&[f0.clone(), f1.clone()], &phi).unwrap();
            for (x, &v) in c.pixels().iter().enumerate() {
                let expect = if phi.labels()[x] == 0 { x as u32 } else { x as u32 + 4 };
                assert_eq!(v, expect);
            }
            seen.insert(c.pixels().to_vec());
        }
        assert_eq!(seen.len(), 16);
    }

    #[test]
    fn degenerate_spinner_samples_zero() {
        let m = OcclusionModel::iid_spinner(g(5, 3), vec![1.0, 0.0]).unwrap();
        for seed in 0..5 {
            assert!(m.sample(seed).labels().iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn spinner_marginals_are_analytic() {
        let m = OcclusionModel::iid_spinner(g(3, 3), vec![0.2, 0.5, 0.3]).unwrap();
        let f = marginal_field(&m).unwrap();
        assert_eq!(f.method(), EstimateMethod::Analytic);
        assert_eq!(f.at(4), &[0.2, 0.5, 0.3]);
    }

    #[test]
    fn coin_model_enumerated_marginal() {
        let grid = g(2, 2);
        let rho: f64 = 0.3;
        let entries = (0..16u128)
            .map(|i| {
                let phi = LabelMap::nth(grid, 2, i);
                let k = phi.count(1) as i32;
                (phi, rho.powi(k) * (1.0 - rho).powi(4 - k))
            })
            .collect();
        let table = OcclusionModel::table(grid, 2, entries).unwrap();
        let f = exact_marginal_field(&table, ENUMERATION_CAP).unwrap();
        for x in 0..4 {
            assert!((f.get(x, 1) - 0.3).abs() < 1e-15);
        }
        let cert = certify_flatness(&f, 1e-9);
        assert!(cert.is_flat);
    }

    #[test]
    fn spinner_analytic_matches_enumeration() {
        for (w, h) in [(2, 2), (3, 2)] {
            let m = OcclusionModel::iid_spinner(g(w, h), vec![0.25, 0.75]).unwrap();
            let analytic = check_flatness(&m, 1e-9).unwrap();
            let exact = certify_flatness(&exact_marginal_field(&m, ENUMERATION_CAP).unwrap(), 1e-9);
            assert_eq!(analytic.is_flat, exact.is_flat);
            assert_eq!(analytic.lambdas, exact.lambdas);
            assert_eq!(exact.method, EstimateMethod::Exact);
        }
    }

    #[test]
    fn deterministic_nonconstant_is_not_flat() {
        let grid = g(2, 2);
        let phi = LabelMap::new(grid, 2, vec![0, 1, 1, 1]).unwrap();
        let cert = check_flatness(&OcclusionModel::deterministic(phi.clone()), 1e-9).unwrap();
        assert!(!cert.is_flat);
        assert_eq!(cert.max_spread, 1.0);
        let f = marginal_field(&OcclusionModel::deterministic(phi.clone())).unwrap();
        for x in 0..4 {
            assert_eq!(f.get(x, phi.labels()[x] as usize), 1.0);
        }
    }

    #[test]
    fn single_orbit_class_table_is_flat() {
        let grid = g(2, 2);
        let phi0 = LabelMap::new(grid, 2, vec![1, 0, 0, 0]).unwrap();
        let m = OcclusionModel::class_table_from_masses(grid, 2, vec![(phi0.clone(), 1.0)]).unwrap();
        let cert = check_flatness(&m, 1e-9).unwrap();
        assert!(cert.is_flat);
        assert_eq!(cert.lambdas.unwrap(), vec![0.75, 0.25]);
        for seed in 0..20 {
            let s = m.sample(seed);
            assert!(phi0.orbit().contains(&s));
        }
    }

    #[test]
    fn class_table_rejects_shared_orbits() {
        let grid = g(2, 2);
        let a = LabelMap::new(grid, 2, vec![1, 0, 0, 0]).unwrap();
        let b = LabelMap::new(grid, 2, vec![0, 1, 0, 0]).unwrap();
        assert!(OcclusionModel::class_table_from_masses(grid, 2, vec![(a, 0.5), (b, 0.5)]).is_err());
    }

    #[test]
    fn table_mass_must_be_one() {
        let grid = g(2, 1);
        let a = LabelMap::new(grid, 2, vec![1, 0]).unwrap();
        assert!(OcclusionModel::table(grid, 2, vec![(a, 0.9)]).is_err());
    }

    #[test]
    fn spinner_sampling_matches_marginal() {
        let grid = g(2, 2);
        let m = OcclusionModel::coin(grid, 0.5).unwrap();
        let samples = 100_000;
        let mc = monte_carlo_marginal_field(&m, samples, 11).unwrap();
        let sigma = (0.25f64 / samples as f64).sqrt();
        for x in 0..4 {
            assert!((mc.get(x, 1) - 0.5).abs() <= 3.0 * sigma, "pixel {x}: {}", mc.get(x, 1));
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let m = OcclusionModel::coin(g(5, 5), 0.5).unwrap();
        assert!(matches!(
            exact_marginal_field(&m, ENUMERATION_CAP),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn expected_histogram_of_point_mass_model() {
        let grid = g(3, 3);
        let y = ValueSpace::cyclic(4).unwrap();
        let f0 = Image::from_fn(grid, y.clone(), |p| (p.row + p.col) % 4).unwrap();
        let f1 = Image::from_fn(grid, y, |p| (p.row * 2 + 1) % 4).unwrap();
        let w = WeightingFunction::square(grid, 1).unwrap();
        let m = OcclusionModel::deterministic(LabelMap::constant(grid, 2, 0).unwrap());
        let e = expected_local_histogram(&m, &[f0.clone(), f1], &w, &FilterPlan::direct()).unwrap();
        let lh0 = local_histogram(&f0, &w, &FilterPlan::direct()).unwrap();
        assert_eq!(e.max_abs_diff(&lh0), 0.0);
    }

    #[test]
    fn delta_window_has_zero_bound() {
        let grid = g(3, 3);
        let probs: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 / 10.0, 1.0 - i as f64 / 10.0]).collect();
        let m = OcclusionModel::pixelwise(grid, &probs).unwrap();
        let y = ValueSpace::cyclic(3).unwrap();
        let f0 = Image::from_fn(grid, y.clone(), |p| p.row % 3).unwrap();
        let f1 = Image::from_fn(grid, y, |p| p.col % 3).unwrap();
        let report = verify_decomposition_bound(&m, &[f0, f1], &WeightingFunction::delta(grid)).unwrap();
        assert_eq!(report.max_bound, 0.0);
        assert!(report.max_abs_epsilon < 1e-15);
        assert!(report.holds);
    }
}
