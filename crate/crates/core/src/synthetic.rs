//! Synthetic tissue-like textures and an end-to-end classification benchmark.
//!
//! Three flat models stand in for histology classes:
//!
//! * cartilage: sparse round cells over a pale matrix, 80/20 by area;
//! * connective: denser, smaller blobs over a pink background, 60/40;
//! * pseudovascular: an overlay putting two colors of blobs in holes cut
//!   from a white field, 50/25/25.
//!
//! Sources are noisy constant RGB images, quantized to the red and blue
//! channels at 3 bits each (`8,drop,8`, 64 values), which is the value space
//! the classifier sees.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::classifier::{classify_image, erode_labels, evaluate, train, ConfusionMatrix, SubspaceClassifier, TrainingSet};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::histogram::FilterPlan;
use crate::image::{Image, LabelMap, ValueSpace};
use crate::io::{self, GridNode, ModelConfig, ModelNode, Palette, RunManifest, SourceNode};
use crate::occlusion::{occlude, OcclusionModel};
use crate::rng;
use crate::texture::{synthesize_texture, BlobDistribution};
use crate::window::WindowSpec;

/// An RGB image (`Z_256³`) of constant `color` plus independent Gaussian
/// noise of standard deviation `noise` per channel, clamped to `0..=255`.
pub fn noisy_constant(grid: Grid, color: &[u32], noise: f64, seed: u64) -> Result<Image> {
    if color.len() != 3 || color.iter().any(|&c| c > 255) {
        return Err(Error::InvalidArgument(format!("{color:?} is not an 8-bit RGB color")));
    }
    let normal = Normal::new(0.0, noise.max(0.0))
        .map_err(|e| Error::InvalidArgument(format!("noise level {noise}: {e}")))?;
    let pixels = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            color.iter().fold(0u32, |acc, &c| {
                let v = if noise > 0.0 {
                    (c as f64 + normal.sample(&mut r)).round().clamp(0.0, 255.0) as u32
                } else {
                    c
                };
                (acc << 8) | v
            })
        })
        .collect();
    Image::new(grid, ValueSpace::new(vec![256; 3])?, pixels)
}

/// The sources a config describes, quantized if it asks for it.
pub fn sources_from_config(cfg: &ModelConfig, seed: u64) -> Result<Vec<Image>> {
    let grid = cfg.grid()?;
    let quant = cfg.quantization()?;
    cfg.sources
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let img = noisy_constant(grid, &s.color, s.noise, rng::derive(seed, 1000 + k as u64))?;
            match &quant {
                Some(q) => img.quantize(q),
                None => Ok(img),
            }
        })
        .collect()
}

/// Spinner density `ρ` at which an i.i.d. expansion by `blobs` covers a
/// fraction `target` of the grid (bisection on the closed-form coverage).
pub fn seed_density_for_coverage(grid: Grid, blobs: &BlobDistribution, target: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::InvalidArgument(format!("coverage {target} must lie in [0, 1)")));
    }
    let q = blobs.coverage(grid);
    let covered = |rho: f64| 1.0 - q.iter().map(|&qo| 1.0 - rho * qo).product::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if covered(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TissuePreset {
    Cartilage,
    Connective,
    Pseudovascular,
}

impl TissuePreset {
    pub const ALL: [TissuePreset; 3] = [TissuePreset::Cartilage, TissuePreset::Connective, TissuePreset::Pseudovascular];

    pub fn short_name(self) -> &'static str {
        match self {
            TissuePreset::Cartilage => "Ca",
            TissuePreset::Connective => "Co",
            TissuePreset::Pseudovascular => "Ps",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cartilage" | "ca" => Ok(TissuePreset::Cartilage),
            "connective" | "co" => Ok(TissuePreset::Connective),
            "pseudovascular" | "ps" => Ok(TissuePreset::Pseudovascular),
            _ => Err(Error::InvalidArgument(format!("unknown preset `{name}`"))),
        }
    }

    /// A full config (grid, sources, quantization, model) for this preset.
    pub fn config(self, grid: Grid) -> Result<ModelConfig> {
        let expansion = |blobs: BlobDistribution, coverage: f64| -> Result<ModelNode> {
            let rho = seed_density_for_coverage(grid, &blobs, coverage)?;
            let model = OcclusionModel::expansion(OcclusionModel::coin(grid, rho)?, blobs)?;
            Ok(ModelNode::from_model(&model))
        };
        let source = |color: [u32; 3]| SourceNode {
            color: color.to_vec(),
            noise: 10.0,
        };
        let (model, sources, names) = match self {
            TissuePreset::Cartilage => (
                expansion(BlobDistribution::disk(vec![(2, 0.5), (3, 0.5)])?, 0.2)?,
                vec![source([208, 200, 240]), source([112, 60, 176])],
                vec!["matrix", "cell"],
            ),
            TissuePreset::Connective => (
                expansion(BlobDistribution::disk(vec![(1, 0.7), (2, 0.3)])?, 0.4)?,
                vec![source([240, 150, 144]), source([176, 90, 80])],
                vec!["stroma", "fiber"],
            ),
            TissuePreset::Pseudovascular => {
                let top = ModelNode::IidSpinner { probs: vec![1.0] };
                let mask = expansion(BlobDistribution::disk(vec![(3, 0.5), (4, 0.5)])?, 0.5)?;
                let bottom = expansion(BlobDistribution::disk(vec![(1, 0.5), (2, 0.5)])?, 0.5)?;
                (
                    ModelNode::Overlay {
                        top: Box::new(top),
                        bottom: Box::new(bottom),
                        mask: Box::new(mask),
                    },
                    vec![source([240, 230, 240]), source([208, 40, 48]), source([80, 40, 112])],
                    vec!["lumen", "blood", "wall"],
                )
            }
        };
        Ok(ModelConfig {
            seed: None,
            quantize: Some("8,drop,8".into()),
            names: names.into_iter().map(String::from).collect(),
            grid: GridNode {
                width: grid.width(),
                height: grid.height(),
            },
            sources,
            model,
        })
    }
}

/// A Voronoi partition of the grid into `sites` cells (Euclidean, not
/// wrapped), cell `i` labeled `i mod classes`.
pub fn voronoi_regions(grid: Grid, sites: usize, classes: usize, seed: u64) -> Result<LabelMap> {
    if sites < classes || classes == 0 {
        return Err(Error::InvalidArgument("need at least one site per class".into()));
    }
    let mut r = rng::global(seed);
    let centers: Vec<(f64, f64)> = (0..sites)
        .map(|_| (rng::unit(&mut r) * grid.height() as f64, rng::unit(&mut r) * grid.width() as f64))
        .collect();
    LabelMap::from_fn(grid, classes, |p| {
        let (row, col) = (p.row as f64 + 0.5, p.col as f64 + 0.5);
        let mut best = (f64::INFINITY, 0);
        for (i, &(cr, cc)) in centers.iter().enumerate() {
            let d = (row - cr).powi(2) + (col - cc).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1 % classes
    })
}

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub size: usize,
    pub samples_per_class: usize,
    pub components: usize,
    pub window: WindowSpec,
    pub regions: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            size: 256,
            samples_per_class: 64,
            components: 2,
            window: WindowSpec::CenterWeighted { radius: 4, center: None },
            regions: 6,
            seed: 0,
        }
    }
}

pub struct BenchmarkOutcome {
    pub training_images: Vec<Image>,
    pub classifier: SubspaceClassifier,
    pub composite: Image,
    pub truth: LabelMap,
    pub predicted: LabelMap,
    /// `truth` with pixels near region boundaries or the image border
    /// relabeled `K` and excluded from the confusion matrix.
    pub scored_truth: LabelMap,
    pub confusion: ConfusionMatrix,
}

fn texture_for(preset: TissuePreset, grid: Grid, seed: u64) -> Result<Image> {
    let cfg = preset.config(grid)?;
    let model = cfg.build_model()?;
    let sources = sources_from_config(&cfg, rng::derive(seed, 1))?;
    Ok(synthesize_texture(&model, &sources, rng::derive(seed, 2))?.0)
}

/// Trains on one texture per preset, then classifies a held-out composite
/// whose regions are filled with freshly drawn textures.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    let grid = Grid::new(cfg.size, cfg.size)?;
    let w = cfg.window.build(grid)?;
    let margin = cfg.window.radius();
    let k = TissuePreset::ALL.len();
    let train_seed = rng::derive(cfg.seed, 1);
    let test_seed = rng::derive(cfg.seed, 2);
    let training_images = TissuePreset::ALL
        .iter()
        .enumerate()
        .map(|(i, &p)| texture_for(p, grid, rng::derive(train_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut set = TrainingSet::new(training_images[0].values().size());
    for (class, img) in training_images.iter().enumerate() {
        let truth = LabelMap::constant(grid, k, class)?;
        set.add_class_from_image(img, &truth, class, &w, false, cfg.samples_per_class, margin, cfg.seed)?;
    }
    let classifier = train(&set, &vec![cfg.components; k])?;

    let held_out = TissuePreset::ALL
        .iter()
        .enumerate()
        .map(|(i, &p)| texture_for(p, grid, rng::derive(test_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let truth = voronoi_regions(grid, cfg.regions, k, rng::derive(test_seed, 99))?;
    let composite = occlude(&held_out, &truth)?;
    let predicted = classify_image(&composite, &w, &classifier, &FilterPlan::noncyclic())?;
    let scored_truth = erode_labels(&truth, margin, k)?;
    let confusion = evaluate(&predicted, &scored_truth, &[k])?;
    Ok(BenchmarkOutcome {
        training_images,
        classifier,
        composite,
        truth,
        predicted,
        scored_truth,
        confusion,
    })
}

/// Writes the benchmark's images, label maps, classifier and confusion table
/// into `dir`, followed by a manifest over all of them.
pub fn write_benchmark(out: &BenchmarkOutcome, dir: &Path, seed: u64) -> Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let names: Vec<String> = TissuePreset::ALL.iter().map(|p| p.short_name().to_string()).collect();
    let palette = Palette::default_for(names.len(), &names);
    let mut manifest = RunManifest::new("benchmark", seed);
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        io::write_atomic(&path, &bytes)?;
        manifest.add_output(&path)
    };
    emit("composite.pgm", io::encode_pnm(&out.composite.flatten())?)?;
    emit("classifier.hclf", io::encode_classifier(&out.classifier))?;
    emit("confusion.txt", out.confusion.to_table(&names).into_bytes())?;
    for (name, labels) in [("truth.pgm", &out.truth), ("predicted.pgm", &out.predicted)] {
        let path = dir.join(name);
        io::write_label_map(&path, labels, &palette)?;
        manifest.add_output(&path)?;
    }
    let manifest = manifest.finalize(0);
    manifest.write(&dir.join("manifest.toml"))?;
    Ok(manifest)
}
