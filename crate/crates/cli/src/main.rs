//! `mgeneo`: GENEO filtrations, persistence and landscapes from the command
//! line.
//!
//! Exit status is 0 on success, 1 when a computation fails and 2 for usage or
//! configuration errors. Settings come from flags first, then from the file
//! given by `--config`, then from built-in defaults.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::settings::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "mgeneo",
    version,
    about = "Multiparameter persistence features of grayscale images"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file of default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct BankArgs {
    /// Preset bank: multi-geneo, multi-dgeneo or mix-geneo.
    #[arg(long)]
    pub bank: Option<String>,
    /// Bank description file (TOML); overrides --bank.
    #[arg(long)]
    pub bank_config: Option<PathBuf>,
    /// Skip the min-max rescale of filtered channels to [0, 255].
    #[arg(long)]
    pub no_rescale: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ImageArgs {
    /// PGM (P5), CSV or IDX image file.
    pub image: PathBuf,
    /// Image index inside an IDX file.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
}

#[derive(Debug, Args, Clone, Default)]
pub struct BifiltArgs {
    /// Triangle grading: square-max or simplex-max.
    #[arg(long)]
    pub rule: Option<String>,
    /// Snap grades to this many bins per axis (0 keeps exact grades).
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GridArgs {
    /// Grid lower corner, `x,y`.
    #[arg(long)]
    pub grid_lo: Option<String>,
    /// Grid upper corner, `x,y`.
    #[arg(long)]
    pub grid_hi: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct PiArgs {
    #[arg(long)]
    pub pi_resolution: Option<usize>,
    #[arg(long)]
    pub pi_sigma: Option<f64>,
    /// Shared birth/persistence range, `lo,hi`.
    #[arg(long)]
    pub pi_range: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrialArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// PCA components: a number or `auto`.
    #[arg(long)]
    pub components: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply an operator bank; writes psi<i>.pgm and psi<i>.csv.
    Filter {
        #[command(flatten)]
        input: ImageArgs,
        #[command(flatten)]
        bank: BankArgs,
    },
    /// Build a bifiltration; writes bifiltration.txt and bifiltration.rivet.
    Bifilt {
        #[command(flatten)]
        input: ImageArgs,
        #[command(flatten)]
        bank: BankArgs,
        #[command(flatten)]
        bifilt: BifiltArgs,
    },
    /// One-parameter persistence diagram; writes diagram.csv.
    Pd {
        #[command(flatten)]
        input: ImageArgs,
        /// lower or upper.
        #[arg(long, default_value = "lower")]
        filtration: String,
    },
    /// Persistence landscape; writes landscape_H<d>.json and heatmaps.
    Landscape {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long)]
        k_max: Option<usize>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Hilbert function on the grid; writes hilbert_H<d>.csv.
    Hilbert {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Feature table of an image set; writes features.csv.
    Vectorize {
        /// IDX image file.
        images: PathBuf,
        /// IDX label file.
        labels: PathBuf,
        #[arg(long, default_value = "mix-G")]
        filtration: String,
        #[arg(long, default_value = "H0+H1")]
        homology: String,
        /// Comma-separated digit classes to keep.
        #[arg(long)]
        classes: Option<String>,
        #[arg(long)]
        per_class: Option<usize>,
        #[command(flatten)]
        bank: BankArgs,
        #[command(flatten)]
        bifilt: BifiltArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        pi: PiArgs,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Repeated stratified trials on a feature table; writes report.json.
    Classify {
        features: PathBuf,
        /// L, PL or PS.
        #[arg(long, default_value = "PL")]
        method: String,
        #[command(flatten)]
        trials: TrialArgs,
    },
    /// Full pipeline on MNIST; writes report.json.
    Experiment {
        /// 0vs1, 1vs3, 6vs9, any other `AvsB`, or ten.
        #[arg(long)]
        task: String,
        /// lower, upper, mul-G, mul-D or mix-G.
        #[arg(long)]
        filtration: String,
        /// sample500 or full.
        #[arg(long, default_value = "sample500")]
        scale: String,
        #[arg(long)]
        per_class: Option<usize>,
        /// Directory with MNIST IDX files (default: $MNIST_DIR, then the
        /// bundled subset).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        no_cache: bool,
        #[command(flatten)]
        trials: TrialArgs,
        #[command(flatten)]
        bifilt: BifiltArgs,
        #[command(flatten)]
        bank: BankArgs,
    },
    /// Landscape stability against the operator bound on random pairs.
    Stability {
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 12)]
        size: usize,
        #[arg(long, default_value = "multi-geneo")]
        bank: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rule: Option<String>,
    },
    /// The 3×3 worked example; writes its bifiltration and Hilbert functions.
    Fixture {
        #[arg(long)]
        rule: Option<String>,
        /// Print the sublevel set at grade `x,y`.
        #[arg(long)]
        grade: Option<String>,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct SourceArgs {
    /// Image file (PGM, CSV or IDX) or a bifiltration text file.
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[command(flatten)]
    pub bank: BankArgs,
    #[command(flatten)]
    pub bifilt: BifiltArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = settings::FileSettings::load(cli.config.as_deref())?;
    let threads = cli.threads.or(file.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(UsageError::new("--threads must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = commands::Context { file, out };
    match cli.command {
        Command::Filter { input, bank } => commands::filter(&ctx, &input, &bank),
        Command::Bifilt {
            input,
            bank,
            bifilt,
        } => commands::bifilt(&ctx, &input, &bank, &bifilt),
        Command::Pd { input, filtration } => commands::pd(&ctx, &input, &filtration),
        Command::Landscape {
            source,
            dim,
            k_max,
            grid,
        } => commands::landscape(&ctx, &source, dim, k_max, &grid),
        Command::Hilbert { source, dim, grid } => commands::hilbert(&ctx, &source, dim, &grid),
        Command::Vectorize {
            images,
            labels,
            filtration,
            homology,
            classes,
            per_class,
            bank,
            bifilt,
            grid,
            pi,
            k_max,
        } => commands::vectorize(
            &ctx,
            commands::VectorizeArgs {
                images,
                labels,
                filtration,
                homology,
                classes,
                per_class,
                bank,
                bifilt,
                grid,
                pi,
                k_max,
            },
        ),
        Command::Classify {
            features,
            method,
            trials,
        } => commands::classify(&ctx, &features, &method, &trials),
        Command::Experiment {
            task,
            filtration,
            scale,
            per_class,
            data_dir,
            cache_dir,
            no_cache,
            trials,
            bifilt,
            bank,
        } => commands::experiment(
            &ctx,
            commands::ExperimentArgs {
                task,
                filtration,
                scale,
                per_class,
                data_dir,
                cache_dir,
                no_cache,
                trials,
                bifilt,
                bank,
            },
        ),
        Command::Stability {
            pairs,
            size,
            bank,
            seed,
            rule,
        } => commands::stability(&ctx, pairs, size, &bank, seed, rule.as_deref()),
        Command::Fixture { rule, grade } => {
            commands::fixture(&ctx, rule.as_deref(), grade.as_deref())
        }
    }
}
