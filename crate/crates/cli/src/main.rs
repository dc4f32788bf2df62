use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use histocube::classifier::{classify_image, erode_labels, evaluate, train, TrainingSet};
use histocube::error::Error;
use histocube::grid::Grid;
use histocube::histogram::{local_histogram, FilterPlan};
use histocube::image::Image;
use histocube::io::{
    read_classifier, read_label_map, read_pnm, write_atomic, write_classifier, write_cube, write_label_map,
    write_level_stack, write_pnm, ModelConfig, Palette, RunManifest,
};
use histocube::occlusion::{
    certify_flatness, marginal_field_with, verify_decomposition_bound, EstimateMethod, MarginalOptions,
    OcclusionModel, Representation, ENUMERATION_CAP,
};
use histocube::rng;
use histocube::synthetic::{sources_from_config, TissuePreset};
use histocube::texture::{check_effective_disjointness, synthesize_texture, DisjointnessCheck, ExpansionModel};
use histocube::window::WindowSpec;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "histocube", version, about = "Local histograms, occlusion models and texture classification")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random choice (overrides a seed in a model config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "HISTOCUBE_THREADS")]
    threads: Option<usize>,
    /// Filtering mode; `lh` defaults to automatic cyclic filtering, training
    /// and classification to `noncyclic`.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Weighting function: delta, box:R or center-weighted:R[:c0].
    #[arg(long, global = true, default_value = "center-weighted:4")]
    window: WindowSpec,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Direct,
    Fft,
    Noncyclic,
}

impl Global {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn plan(&self, default: FilterPlan) -> FilterPlan {
        match self.mode {
            None => default,
            Some(Mode::Direct) => FilterPlan::direct(),
            Some(Mode::Fft) => FilterPlan::fft(),
            Some(Mode::Noncyclic) => FilterPlan::noncyclic(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the local histogram cube of an image.
    Lh {
        input: PathBuf,
        /// Cube file to write.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write one grayscale image per level into this directory.
        #[arg(long)]
        stack: Option<PathBuf>,
    },
    /// Draw textures from an occlusion model.
    Synth {
        #[command(flatten)]
        model: ModelSource,
        /// Side length for presets.
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Source images, one per label, replacing the configured colors.
        #[arg(long = "source")]
        sources: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check flatness, the decomposition bound and disjointness of a model.
    Verify {
        #[command(flatten)]
        model: ModelSource,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long = "source")]
        sources: Vec<PathBuf>,
        /// Checks whose failure sets the exit code.
        #[arg(long, value_delimiter = ',', default_value = "bound")]
        require: Vec<Check>,
        /// Samples for Monte Carlo marginals when exact ones are out of reach.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Train a subspace classifier from an image and its label map.
    Train {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Classes to learn, in order (default: every label).
        #[arg(long, value_delimiter = ',')]
        classes: Vec<usize>,
        /// Training points per class.
        #[arg(short = 'm', long, default_value_t = 64)]
        samples: usize,
        /// Principal components per class.
        #[arg(short = 'n', long, default_value_t = 2)]
        components: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Label every pixel of an image with a trained classifier.
    Classify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        /// Class names for the palette sidecar.
        #[arg(long, value_delimiter = ',')]
        names: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Confusion matrix of a predicted label map against the truth.
    Eval {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Truth labels to leave out.
        #[arg(long, value_delimiter = ',')]
        ignore: Vec<usize>,
        /// Only score pixels at least this far from region boundaries and
        /// the image border.
        #[arg(long, default_value_t = 0)]
        erode: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelSource {
    /// Model config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in model: cartilage, connective or pseudovascular.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    Flatness,
    Bound,
    Disjoint,
}

struct Loaded {
    config: ModelConfig,
    text: String,
    path: Option<PathBuf>,
}

impl ModelSource {
    fn load(&self, size: usize) -> Result<Loaded> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let config = ModelConfig::parse(&text).with_context(|| format!("in {}", path.display()))?;
            return Ok(Loaded {
                config,
                text,
                path: Some(path.clone()),
            });
        }
        let name = self.preset.as_deref().unwrap_or_default();
        let config = TissuePreset::parse(name)?.config(Grid::new(size, size)?)?;
        let text = config.to_toml()?;
        Ok(Loaded { config, text, path: None })
    }
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.toml");
    PathBuf::from(s)
}

fn finish(manifest: RunManifest, at: &Path, start: Instant) -> Result<()> {
    let manifest = manifest.finalize(start.elapsed().as_millis() as u64);
    manifest.write(at)?;
    println!("manifest {} ({})", at.display(), &manifest.manifest_hash[..16]);
    Ok(())
}

/// Writes an image as PGM/PPM, flattening multi-factor value spaces that
/// are neither gray nor RGB to a single channel of value indices.
fn write_image(path: &Path, f: &Image) -> Result<()> {
    let factors = f.values().factors();
    let plain = factors.len() == 1 || (factors.len() == 3 && factors.iter().all(|&n| n == factors[0]));
    if plain {
        write_pnm(path, f)?;
    } else {
        write_pnm(path, &f.flatten())?;
    }
    Ok(())
}

fn image_extension(f: &Image) -> &'static str {
    let factors = f.values().factors();
    if factors.len() == 3 && factors.iter().all(|&n| n == factors[0]) {
        "ppm"
    } else {
        "pgm"
    }
}

fn load_sources(paths: &[PathBuf], cfg: &ModelConfig, seed: u64) -> Result<Vec<Image>> {
    if paths.is_empty() {
        return Ok(sources_from_config(cfg, seed)?);
    }
    let images = paths
        .iter()
        .map(|p| read_pnm(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(match cfg.quantization()? {
        Some(q) => images.iter().map(|f| f.quantize(&q)).collect::<histocube::error::Result<_>>()?,
        None => images,
    })
}

fn cmd_lh(g: &Global, input: &Path, output: &Path, stack: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let f = read_pnm(input).with_context(|| format!("reading {}", input.display()))?;
    let w = g.window.build(f.grid())?;
    let cube = local_histogram(&f, &w, &g.plan(FilterPlan::default()))?;
    write_cube(output, &cube)?;
    let mut manifest = RunManifest::new(&format!("lh --window {}", g.window), g.seed());
    manifest.add_input(input)?;
    manifest.add_output(output)?;
    if let Some(dir) = stack {
        for p in write_level_stack(dir, &cube)? {
            manifest.add_output(&p)?;
        }
    }
    println!("{} levels over {} pixels -> {}", cube.num_levels(), f.grid().len(), output.display());
    finish(manifest, &manifest_path(output), start)
}

fn cmd_synth(g: &Global, model: &ModelSource, size: usize, sources: &[PathBuf], count: usize, out: &Path) -> Result<()> {
    let start = Instant::now();
    let loaded = model.load(size)?;
    let cfg = &loaded.config;
    let occlusion = cfg.build_model()?;
    let seed = g.seed.or(cfg.seed).unwrap_or(0);
    let images = load_sources(sources, cfg, rng::derive(seed, 1))?;
    if images.len() != occlusion.num_labels() {
        return Err(Error::CountMismatch {
            expected: occlusion.num_labels(),
            found: images.len(),
        }
        .into());
    }
    std::fs::create_dir_all(out)?;
    let palette = Palette::default_for(occlusion.num_labels(), &cfg.names);
    let mut manifest = RunManifest::new("synth", seed).with_config(&loaded.text);
    if let Some(p) = &loaded.path {
        manifest.add_input(p)?;
    }
    for p in sources {
        manifest.add_input(p)?;
    }
    for i in 0..count {
        let (texture, labels) = synthesize_texture(&occlusion, &images, rng::derive(rng::derive(seed, 2), i as u64))?;
        let img_path = out.join(format!("texture_{i:03}.{}", image_extension(&texture)));
        let lab_path = out.join(format!("labels_{i:03}.pgm"));
        write_image(&img_path, &texture)?;
        write_label_map(&lab_path, &labels, &palette)?;
        manifest.add_output(&img_path)?;
        manifest.add_output(&lab_path)?;
        let fractions: Vec<String> = (0..labels.num_labels())
            .map(|n| format!("{:.3}", labels.count(n) as f64 / labels.grid().len() as f64))
            .collect();
        println!("{} label fractions [{}]", img_path.display(), fractions.join(", "));
    }
    finish(manifest, &out.join("manifest.toml"), start)
}

fn method_name(m: EstimateMethod) -> String {
    match m {
        EstimateMethod::Exact => "exact".into(),
        EstimateMethod::Analytic => "analytic".into(),
        EstimateMethod::MonteCarlo { samples } => format!("Monte Carlo, {samples} samples"),
    }
}

fn expansion_nodes(model: &OcclusionModel, out: &mut Vec<ExpansionModel>) {
    match model.representation() {
        Representation::Expansion(e) => {
            out.push((**e).clone());
            expansion_nodes(&e.seed, out);
        }
        Representation::Overlay(o) => {
            expansion_nodes(&o.top, out);
            expansion_nodes(&o.bottom, out);
            expansion_nodes(&o.mask, out);
        }
        _ => {}
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    g: &Global,
    model: &ModelSource,
    size: usize,
    sources: &[PathBuf],
    require: &[Check],
    samples: usize,
    tolerance: f64,
) -> Result<bool> {
    let loaded = model.load(size)?;
    let cfg = &loaded.config;
    let occlusion = cfg.build_model()?;
    let grid = occlusion.grid();
    println!("model: {} on {grid}, N = {}", occlusion.kind(), occlusion.num_labels());
    let mut ok = true;
    let mut report = |check: Check, passed: bool, line: String| {
        let required = require.contains(&check);
        let verdict = match (passed, required) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "not satisfied (not required)",
        };
        println!("{line}: {verdict}");
        ok &= passed || !required;
    };

    let opts = MarginalOptions {
        mc_samples: samples,
        seed: g.seed(),
        ..Default::default()
    };
    let field = marginal_field_with(&occlusion, &opts)?;
    let tol = if matches!(field.method(), EstimateMethod::MonteCarlo { .. }) {
        tolerance.max(4.0 * field.max_std_error())
    } else {
        tolerance
    };
    let cert = certify_flatness(&field, tol);
    let lambdas = cert
        .lambdas
        .as_ref()
        .map(|l| l.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", "))
        .unwrap_or_else(|| "-".into());
    report(
        Check::Flatness,
        cert.is_flat,
        format!(
            "flatness ({}; spread {:.3e}, tolerance {:.1e}; lambda = [{lambdas}])",
            method_name(cert.method),
            cert.max_spread,
            cert.tolerance
        ),
    );

    let mut expansions = Vec::new();
    expansion_nodes(&occlusion, &mut expansions);
    for (i, e) in expansions.iter().enumerate() {
        let how = if e.seed.enumeration_size() <= ENUMERATION_CAP {
            DisjointnessCheck::Exhaustive { cap: ENUMERATION_CAP }
        } else {
            DisjointnessCheck::Sampled {
                trials: samples.min(1000),
                seed: g.seed(),
            }
        };
        let d = check_effective_disjointness(e, how)?;
        let scope = if d.certified { "certified" } else { "sampled" };
        report(
            Check::Disjoint,
            d.disjoint,
            format!("expansion {i}: effective disjointness ({scope}, {} seed maps)", d.maps_checked),
        );
    }
    if expansions.is_empty() && require.contains(&Check::Disjoint) {
        println!("effective disjointness: not applicable");
    }

    if occlusion.enumeration_size() > ENUMERATION_CAP {
        let msg = format!(
            "the decomposition bound needs every label map, and this model has more than {ENUMERATION_CAP}; \
             use a smaller --size or `--require flatness`, which falls back to Monte Carlo marginals"
        );
        if require.contains(&Check::Bound) {
            return Err(Error::EnumerationCap {
                required: occlusion.enumeration_size(),
                cap: ENUMERATION_CAP,
            })
            .context(msg);
        }
        println!("decomposition bound: skipped ({msg})");
    } else {
        let mut images = load_sources(sources, cfg, rng::derive(g.seed(), 1))?;
        if images.is_empty() {
            images = test_images(grid, occlusion.num_labels(), g.seed());
            println!("no sources configured; using {} random 4-level test images", images.len());
        }
        let w = g.window.build(grid)?;
        let r = verify_decomposition_bound(&occlusion, &images, &w)?;
        report(
            Check::Bound,
            r.holds,
            format!(
                "decomposition bound (max |eps| {:.3e}, max bound {:.3e}, min slack {:.3e})",
                r.max_abs_epsilon, r.max_bound, r.min_slack
            ),
        );
    }
    Ok(ok)
}

fn test_images(grid: Grid, n: usize, seed: u64) -> Vec<Image> {
    let values = histocube::image::ValueSpace::cyclic(4).expect("four levels");
    (0..n)
        .map(|k| {
            let mut r = rng::stream(rng::derive(seed, 7), k as u64);
            Image::from_fn(grid, values.clone(), |_| (rng::unit(&mut r) * 4.0) as usize).expect("values in range")
        })
        .collect()
}

fn class_names(palette: Option<&Palette>, n: usize) -> Vec<String> {
    match palette {
        Some(p) => p.names(),
        None => (0..n).map(|i| format!("class{i}")).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    g: &Global,
    image: &Path,
    labels: &Path,
    classes: &[usize],
    samples: usize,
    components: usize,
    output: &Path,
) -> Result<()> {
    let start = Instant::now();
    let f = read_pnm(image).with_context(|| format!("reading {}", image.display()))?;
    let (truth, palette) = read_label_map(labels).with_context(|| format!("reading {}", labels.display()))?;
    let classes: Vec<usize> = if classes.is_empty() {
        (0..truth.num_labels()).collect()
    } else {
        classes.to_vec()
    };
    let w = g.window.build(f.grid())?;
    let plan = g.plan(FilterPlan::noncyclic());
    let cyclic = plan.is_cyclic();
    let margin = if cyclic { 0 } else { g.window.radius() };
    let mut set = TrainingSet::new(f.values().size());
    for &c in &classes {
        set.add_class_from_image(&f, &truth, c, &w, cyclic, samples, margin, g.seed())?;
    }
    let clf = train(&set, &vec![components; classes.len()])?;
    write_classifier(output, &clf)?;
    let names = class_names(palette.as_ref(), truth.num_labels());
    for (k, (&c, sub)) in classes.iter().zip(clf.classes()).enumerate() {
        let name = names.get(c).cloned().unwrap_or_else(|| c.to_string());
        let note = if sub.mean_only { " (mean only)" } else { "" };
        println!("class {k} = label {c} {name}: {} components{note}", sub.num_components());
    }
    let mut manifest = RunManifest::new(&format!("train --window {} -m {samples} -n {components}", g.window), g.seed());
    manifest.add_input(image)?;
    manifest.add_input(labels)?;
    manifest.add_output(output)?;
    finish(manifest, &manifest_path(output), start)
}

fn cmd_classify(g: &Global, image: &Path, classifier: &Path, names: &[String], output: &Path) -> Result<()> {
    let start = Instant::now();
    let f = read_pnm(image).with_context(|| format!("reading {}", image.display()))?;
    let clf = read_classifier(classifier).with_context(|| format!("reading {}", classifier.display()))?;
    let w = g.window.build(f.grid())?;
    let plan = g.plan(FilterPlan::noncyclic());
    let labels = classify_image(&f, &w, &clf, &plan)?;
    let palette = Palette::default_for(clf.num_classes(), names);
    write_label_map(output, &labels, &palette)?;
    for k in 0..labels.num_labels() {
        println!("{}: {} pixels", palette.entries[k].1, labels.count(k));
    }
    let mut manifest = RunManifest::new(&format!("classify --window {}", g.window), g.seed());
    manifest.add_input(image)?;
    manifest.add_input(classifier)?;
    manifest.add_output(output)?;
    finish(manifest, &manifest_path(output), start)
}

fn cmd_eval(g: &Global, predicted: &Path, truth: &Path, ignore: &[usize], erode: usize, output: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let (pred, pred_palette) = read_label_map(predicted)?;
    let (truth_map, truth_palette) = read_label_map(truth)?;
    let mut ignore = ignore.to_vec();
    let scored = if erode > 0 {
        let border = truth_map.num_labels().max(pred.num_labels());
        ignore.push(border);
        erode_labels(&truth_map, erode, border)?
    } else {
        truth_map
    };
    let cm = evaluate(&pred, &scored, &ignore)?;
    let names = truth_palette
        .or(pred_palette)
        .map(|p| p.names())
        .unwrap_or_else(|| (0..cm.num_classes()).map(|i| i.to_string()).collect());
    let table = cm.to_table(&names);
    print!("{table}");
    if let Some(out) = output {
        write_atomic(out, table.as_bytes())?;
        let mut manifest = RunManifest::new("eval", g.seed());
        manifest.add_input(predicted)?;
        manifest.add_input(truth)?;
        manifest.add_output(out)?;
        finish(manifest, &manifest_path(out), start)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    match &cli.command {
        Command::Lh { input, output, stack } => cmd_lh(g, input, output, stack.as_deref())?,
        Command::Synth {
            model,
            size,
            sources,
            count,
            output,
        } => cmd_synth(g, model, *size, sources, *count, output)?,
        Command::Verify {
            model,
            size,
            sources,
            require,
            samples,
            tolerance,
        } => return cmd_verify(g, model, *size, sources, require, *samples, *tolerance),
        Command::Train {
            image,
            labels,
            classes,
            samples,
            components,
            output,
        } => cmd_train(g, image, labels, classes, *samples, *components, output)?,
        Command::Classify {
            image,
            classifier,
            names,
            output,
        } => cmd_classify(g, image, classifier, names, output)?,
        Command::Eval {
            predicted,
            truth,
            ignore,
            erode,
            output,
        } => cmd_eval(g, predicted, truth, ignore, *erode, output.as_deref())?,
    }
    Ok(true)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_) | Error::Format(_) => EXIT_IO,
                _ => EXIT_USAGE,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_USAGE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
