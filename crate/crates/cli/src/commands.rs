use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use mgeneo::complex::{
    bifiltration_from_channels, coarsen_bifiltration, lower_star_filtration, upper_star_filtration,
    Bifiltration,
};
use mgeneo::fixture;
use mgeneo::geneo::BankKind;
use mgeneo::img::{load_idx_images, load_idx_labels, read_image, write_csv, write_pgm, GrayImage};
use mgeneo::ml::{run_trials, Method, TrialConfig, TrialReport};
use mgeneo::mpl::{self, hilbert_function, GridSpec};
use mgeneo::ph::{compute_persistence, swap_for_upper_star};
use mgeneo::pipeline::{
    bundled_data_dir, extract_features, random_image_pairs, run_experiment, stability_check,
    Dataset, ExperimentConfig, FeatureCache, FeatureConfig, FiltrationKind, Homology, Scale,
    MNIST_ENV,
};
use mgeneo::vec::FeatureTable;

use crate::settings::{
    parse_flag, parse_pair, read_input, resolve_bank, resolve_bins, resolve_components,
    resolve_grid, resolve_pi, resolve_rule, usage, FileSettings,
};
use crate::{BankArgs, BifiltArgs, GridArgs, ImageArgs, PiArgs, SourceArgs, TrialArgs};

pub struct Context {
    pub file: FileSettings,
    pub out: PathBuf,
}

impl Context {
    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn is_idx(bytes: &[u8]) -> bool {
    bytes.starts_with(&[0x1f, 0x8b]) || bytes.starts_with(&[0, 0, 8, 3])
}

fn load_image(path: &Path, index: usize) -> anyhow::Result<GrayImage> {
    let bytes = read_input(path)?;
    if is_idx(&bytes) {
        let mut images = load_idx_images(&bytes)?;
        if index >= images.len() {
            return Err(usage(format!(
                "--index {index} out of range ({} images)",
                images.len()
            )));
        }
        return Ok(images.swap_remove(index));
    }
    Ok(read_image(&bytes)?)
}

fn build(
    ctx: &Context,
    image: &GrayImage,
    bank: &BankArgs,
    bifilt: &BifiltArgs,
) -> anyhow::Result<Bifiltration> {
    let bank = resolve_bank(bank, &ctx.file, BankKind::MixGeneo)?;
    if bank.operators.len() != 2 {
        return Err(usage(format!(
            "a bifiltration needs 2 operators, the bank has {}",
            bank.operators.len()
        )));
    }
    let rule = resolve_rule(bifilt.rule.as_deref(), &ctx.file)?;
    let channels = bank.apply(image)?;
    let b = bifiltration_from_channels(&channels[0], &channels[1], rule)?;
    Ok(match resolve_bins(bifilt, &ctx.file, 0) {
        Some(bins) => coarsen_bifiltration(&b, bins)?,
        None => b,
    })
}

/// A bifiltration text file is recognized by its `w h` header line.
fn load_source(ctx: &Context, source: &SourceArgs) -> anyhow::Result<Bifiltration> {
    let bytes = read_input(&source.input)?;
    if let Ok(text) = std::str::from_utf8(&bytes) {
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        if !first.contains(',') && !first.starts_with('P') && !first.starts_with('#') {
            return Ok(Bifiltration::from_text(text)?);
        }
    }
    let image = load_image(&source.input, source.index)?;
    build(ctx, &image, &source.bank, &source.bifilt)
}

pub fn filter(ctx: &Context, input: &ImageArgs, bank: &BankArgs) -> anyhow::Result<()> {
    let image = load_image(&input.image, input.index)?;
    let bank = resolve_bank(bank, &ctx.file, BankKind::MixGeneo)?;
    for (i, ch) in bank.apply(&image)?.iter().enumerate() {
        let (lo, hi) = if bank.rescale {
            (0.0, 255.0)
        } else {
            let (lo, hi) = ch.min_max();
            (lo, if hi > lo { hi } else { lo + 1.0 })
        };
        ctx.write(&format!("psi{}.pgm", i + 1), write_pgm(ch, lo, hi)?)?;
        ctx.write(&format!("psi{}.csv", i + 1), write_csv(ch))?;
    }
    Ok(())
}

pub fn bifilt(
    ctx: &Context,
    input: &ImageArgs,
    bank: &BankArgs,
    bifilt: &BifiltArgs,
) -> anyhow::Result<()> {
    let image = load_image(&input.image, input.index)?;
    let b = build(ctx, &image, bank, bifilt)?;
    ctx.write("bifiltration.txt", b.to_text())?;
    ctx.write("bifiltration.rivet", b.to_rivet("psi1", "psi2"))
}

pub fn pd(ctx: &Context, input: &ImageArgs, filtration: &str) -> anyhow::Result<()> {
    let image = load_image(&input.image, input.index)?;
    let diagram = match parse_flag::<FiltrationKind>(filtration, "filtration")? {
        FiltrationKind::Lower => compute_persistence(&lower_star_filtration(&image)?),
        FiltrationKind::Upper => {
            swap_for_upper_star(&compute_persistence(&upper_star_filtration(&image)?), 0.0)
        }
        other => return Err(usage(format!("pd needs lower or upper, got {other}"))),
    };
    ctx.write("diagram.csv", diagram.to_csv())
}

pub fn landscape(
    ctx: &Context,
    source: &SourceArgs,
    dim: usize,
    k_max: Option<usize>,
    grid: &GridArgs,
) -> anyhow::Result<()> {
    check_dim(dim)?;
    let grid = resolve_grid(grid, &ctx.file)?;
    let k_max = k_max.or(ctx.file.k_max).unwrap_or(1);
    if k_max == 0 {
        return Err(usage("--k-max must be at least 1"));
    }
    let b = load_source(ctx, source)?;
    let l = mpl::landscape(&b, dim, k_max, &grid)?;
    ctx.write(&format!("landscape_H{dim}.json"), l.to_json())?;
    for k in 1..=k_max {
        ctx.write(&format!("landscape_H{dim}_k{k}.pgm"), l.heatmap_pgm(k)?)?;
    }
    Ok(())
}

fn check_dim(dim: usize) -> anyhow::Result<()> {
    if dim > 1 {
        return Err(usage(format!("--dim must be 0 or 1, got {dim}")));
    }
    Ok(())
}

pub fn hilbert(
    ctx: &Context,
    source: &SourceArgs,
    dim: usize,
    grid: &GridArgs,
) -> anyhow::Result<()> {
    check_dim(dim)?;
    let grid = resolve_grid(grid, &ctx.file)?;
    let b = load_source(ctx, source)?;
    ctx.write(
        &format!("hilbert_H{dim}.csv"),
        hilbert_function(&b, dim, &grid)?.to_csv(),
    )
}

pub struct VectorizeArgs {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub filtration: String,
    pub homology: String,
    pub classes: Option<String>,
    pub per_class: Option<usize>,
    pub bank: BankArgs,
    pub bifilt: BifiltArgs,
    pub grid: GridArgs,
    pub pi: PiArgs,
    pub k_max: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
fn feature_config(
    ctx: &Context,
    filtration: &str,
    homology: &str,
    bank: &BankArgs,
    bifilt: &BifiltArgs,
    grid: &GridArgs,
    pi: &PiArgs,
    k_max: Option<usize>,
) -> anyhow::Result<FeatureConfig> {
    let kind: FiltrationKind = parse_flag(filtration, "filtration")?;
    let mut config = FeatureConfig::new(kind, parse_flag::<Homology>(homology, "homology")?);
    config.grid = resolve_grid(grid, &ctx.file)?;
    config.bins = resolve_bins(bifilt, &ctx.file, 10);
    config.rule = resolve_rule(bifilt.rule.as_deref(), &ctx.file)?;
    config.image = resolve_pi(pi, &ctx.file)?;
    config.k_max = k_max.or(ctx.file.k_max).unwrap_or(1);
    if config.k_max == 0 {
        return Err(usage("--k-max must be at least 1"));
    }
    if let Some(default) = kind.bank_kind() {
        let explicit = bank.bank.is_some()
            || bank.bank_config.is_some()
            || bank.no_rescale
            || ctx.file.bank.is_some()
            || ctx.file.bank_config.is_some()
            || ctx.file.rescale.is_some();
        if explicit {
            config.bank = Some(resolve_bank(bank, &ctx.file, default)?);
        }
    }
    Ok(config)
}

fn parse_classes(s: &str) -> anyhow::Result<Vec<u8>> {
    s.split(',')
        .map(|c| parse_flag::<u8>(c.trim(), "class"))
        .collect()
}

pub fn vectorize(ctx: &Context, args: VectorizeArgs) -> anyhow::Result<()> {
    let config = feature_config(
        ctx,
        &args.filtration,
        &args.homology,
        &args.bank,
        &args.bifilt,
        &args.grid,
        &args.pi,
        args.k_max,
    )?;
    let images = load_idx_images(&read_input(&args.images)?)?;
    let labels = load_idx_labels(&read_input(&args.labels)?)?;
    if images.len() != labels.len() {
        anyhow::bail!("{} images but {} labels", images.len(), labels.len());
    }
    let mut data = Dataset { images, labels };
    let per_class = args.per_class.or(ctx.file.per_class);
    if args.classes.is_some() || per_class.is_some() {
        let classes = match &args.classes {
            Some(s) => parse_classes(s)?,
            None => (0..10).collect(),
        };
        data = data.select(&classes, per_class)?;
    }
    let rows = extract_features(&data.images, &config, None)?;
    ctx.write(
        "features.csv",
        FeatureTable::new(data.labels, rows)?.to_csv(),
    )
}

fn trial_config(ctx: &Context, args: &TrialArgs) -> anyhow::Result<TrialConfig> {
    let trials = args.trials.or(ctx.file.trials).unwrap_or(20);
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    Ok(TrialConfig {
        trials,
        seed: args.seed.or(ctx.file.seed).unwrap_or(0),
        components: resolve_components(args.components.as_deref(), &ctx.file)?,
        ..TrialConfig::default()
    })
}

pub fn classify(
    ctx: &Context,
    features: &Path,
    method: &str,
    trials: &TrialArgs,
) -> anyhow::Result<()> {
    let method: Method = parse_flag(method, "method")?;
    let config = trial_config(ctx, trials)?;
    let text = String::from_utf8(read_input(features)?).context("features file is not UTF-8")?;
    let table = FeatureTable::from_csv(&text)?;
    let accuracies = run_trials(&table, method, &config)?;
    let task = features.file_stem().map_or_else(
        || "features".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    let report = TrialReport::new(&task, "features", "features", method, accuracies);
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    ctx.write("report.json", json + "\n")
}

pub struct ExperimentArgs {
    pub task: String,
    pub filtration: String,
    pub scale: String,
    pub per_class: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub no_cache: bool,
    pub trials: TrialArgs,
    pub bifilt: BifiltArgs,
    pub bank: BankArgs,
}

fn data_dir(flag: Option<PathBuf>, file: &FileSettings, scale: Scale) -> anyhow::Result<PathBuf> {
    let chosen = flag
        .or_else(|| file.data_dir.clone())
        .or_else(|| std::env::var_os(MNIST_ENV).map(PathBuf::from));
    match (chosen, scale) {
        (Some(dir), _) => {
            if !dir.is_dir() {
                return Err(usage(format!(
                    "data directory {} does not exist",
                    dir.display()
                )));
            }
            Ok(dir)
        }
        (None, Scale::Sample500) => Ok(bundled_data_dir()),
        (None, Scale::Full) => Err(usage(format!(
            "scale full needs the MNIST files: pass --data-dir or set {MNIST_ENV}"
        ))),
    }
}

pub fn experiment(ctx: &Context, args: ExperimentArgs) -> anyhow::Result<()> {
    let task = parse_flag(&args.task, "task")?;
    let scale: Scale = parse_flag(&args.scale, "scale")?;
    let mut config = ExperimentConfig::new(task, parse_flag(&args.filtration, "filtration")?);
    config.scale = scale;
    config.per_class = args.per_class.or(ctx.file.per_class).unwrap_or(500);
    config.trials = trial_config(ctx, &args.trials)?;
    config.features = feature_config(
        ctx,
        &args.filtration,
        "H0+H1",
        &args.bank,
        &args.bifilt,
        &GridArgs::default(),
        &PiArgs::default(),
        None,
    )?;
    let dir = data_dir(args.data_dir, &ctx.file, scale)?;
    let cache = (!args.no_cache).then(|| {
        FeatureCache::new(
            args.cache_dir
                .or_else(|| ctx.file.cache_dir.clone())
                .unwrap_or_else(|| PathBuf::from(".cache/mgeneo")),
        )
    });
    let reports = run_experiment(&config, &dir, cache.as_ref())?;
    let json = serde_json::to_string_pretty(&reports)?;
    println!("{json}");
    ctx.write("report.json", json + "\n")
}

pub fn stability(
    ctx: &Context,
    pairs: usize,
    size: usize,
    bank: &str,
    seed: Option<u64>,
    rule: Option<&str>,
) -> anyhow::Result<()> {
    if size == 0 {
        return Err(usage("--size must be positive"));
    }
    let kind: BankKind = parse_flag(bank, "bank")?;
    let bank = mgeneo::geneo::default_bank(kind).without_rescale();
    let rule = resolve_rule(rule, &ctx.file)?;
    let seed = seed.or(ctx.file.seed).unwrap_or(0);
    let images = random_image_pairs(pairs, size, seed)?;
    let report = stability_check(&bank, &images, &GridSpec::default(), rule)?;
    let json = serde_json::to_string_pretty(&report)?;
    ctx.write("stability.json", json + "\n")?;
    println!(
        "{kind}: {} pairs, {} violations, min slack {:.6}",
        report.records.len(),
        report.violations,
        report.min_slack
    );
    if !report.passed() {
        anyhow::bail!("{} pairs exceed the stability bound", report.violations);
    }
    Ok(())
}

pub fn fixture(ctx: &Context, rule: Option<&str>, grade: Option<&str>) -> anyhow::Result<()> {
    let rule = resolve_rule(rule, &ctx.file)?;
    let b = fixture::fixture_bifiltration(rule)?;
    ctx.write("fixture.txt", b.to_text())?;
    ctx.write("fixture.rivet", b.to_rivet("phi1", "phi2"))?;
    // integer grades 0..=10 sit at the cell centres of this grid
    let grid = GridSpec::new([-0.5, -0.5], [10.5, 10.5], 1.0)?;
    for dim in 0..=1 {
        ctx.write(
            &format!("fixture_hilbert_H{dim}.csv"),
            hilbert_function(&b, dim, &grid)?.to_csv(),
        )?;
    }
    if let Some(g) = grade {
        let g = parse_pair(g, "grade")?;
        println!(
            "sublevel at ({}, {}): {{{}}}",
            g[0],
            g[1],
            fixture::sublevel_labels(&b, g).join(", ")
        );
    }
    Ok(())
}
