use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use raf::config::FeatureMode;
use raf::pipeline::{self, PredictInput, Subset};
use raf::{Error, Result, RunConfig};
use raf_core::features::DatasetOrderStats;
use raf_core::generator::PdeFamily;
use raf_core::model::MaskMode;
use raf_core::solvers::RankBy;

/// Learned selection of preconditioned Krylov methods for sparse linear
/// systems.
///
/// Typical pipeline: gen (or label) -> extract -> train -> eval/predict.
/// Worker count for per-matrix stages comes from RAF_THREADS (default: all
/// logical cores).
#[derive(Parser)]
#[command(name = "raf", version)]
struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Global seed; every stage derives its randomness from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Increase log detail (-v debug, -vv trace)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Log errors only
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and label a synthetic PDE corpus
    Gen(GenArgs),
    /// Label every .mtx file in a directory
    Label(LabelDirArgs),
    /// Write feature records for every manifest entry
    Extract(ExtractArgs),
    /// Write a PNG of the feature channels per matrix
    Render(RenderArgs),
    /// Train a selector on extracted features
    Train(TrainArgs),
    /// Rank catalog methods for one matrix
    Predict(PredictArgs),
    /// Score a trained selector
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RankArg {
    /// Median wall-clock time of repeated solves
    Walltime,
    /// Krylov steps; bit-reproducible
    Iterations,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskModeArg {
    /// Zero masked values after normalization
    Zero,
    /// Drop masked values from the input
    Strict,
}

#[derive(Args)]
struct SolveArgs {
    /// Criterion for the optimal method
    #[arg(long, value_enum)]
    rank_by: Option<RankArg>,
    /// Comma-separated methods, e.g. "cg+ilu0,gmres(20)+none"
    #[arg(long)]
    catalog: Option<String>,
    /// Relative residual target
    #[arg(long)]
    rtol: Option<f64>,
    /// Iteration cap per solve (default 10 x order, at most 20000)
    #[arg(long)]
    max_iters: Option<usize>,
    /// Wall-clock cap per solve in seconds
    #[arg(long)]
    timeout: Option<f64>,
    /// Solves per method when ranking by walltime
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Labelable matrices to generate
    #[arg(long)]
    count: Option<usize>,
    /// Comma-separated families: poisson, anisotropic, convection_diffusion
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long)]
    min_order: Option<usize>,
    #[arg(long)]
    max_order: Option<usize>,
    /// Downsample dominant classes to at most RATIO times the smallest
    #[arg(long, value_name = "RATIO", num_args = 0..=1, default_missing_value = "2")]
    balance: Option<f64>,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Args)]
struct LabelDirArgs {
    /// Directory of Matrix Market files
    #[arg(long)]
    dir: PathBuf,
    /// Manifest to write (default: DIR/manifest.jsonl)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Fail if any file could not be labeled
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Args)]
struct FeatureArgs {
    /// Feature layout
    #[arg(long, value_enum)]
    mode: Option<FeatureMode>,
    /// Image resolution
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for .rafb records and .json sidecars
    #[arg(long)]
    out: PathBuf,
    /// Fail if any matrix could not be processed
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true).args(["manifest", "matrix"])))]
struct RenderArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// A single Matrix Market file
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Directory for PNG files
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of feature records
    #[arg(long)]
    features: PathBuf,
    /// Model file to write
    #[arg(long)]
    model: PathBuf,
    /// Maximum epochs
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Epochs without validation improvement before stopping
    #[arg(long)]
    patience: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated absolute values to mask: min_a, max_a, min_gamma,
    /// max_gamma, order, block_order
    #[arg(long, value_delimiter = ',')]
    mask: Option<Vec<String>>,
    #[arg(long, value_enum)]
    mask_mode: Option<MaskModeArg>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true).args(["matrix", "features"])))]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Matrix Market file
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Feature record (.rafb)
    #[arg(long)]
    features: Option<PathBuf>,
    /// Number of methods to print
    #[arg(long, default_value_t = 3)]
    top: usize,
    /// Training corpus order range MIN,MAX (baseline models with --matrix)
    #[arg(long, value_delimiter = ',', num_args = 2)]
    order_range: Option<Vec<usize>>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of feature records
    #[arg(long)]
    features: PathBuf,
    /// Entries to score
    #[arg(long, value_enum, default_value = "test")]
    subset: Subset,
    /// Report path prefix; writes PREFIX.json and PREFIX.txt
    #[arg(long)]
    out: Option<PathBuf>,
}

fn apply_solve(cfg: &mut RunConfig, a: &SolveArgs) {
    if let Some(r) = a.rank_by {
        cfg.labeling.options.rank_by = match r {
            RankArg::Walltime => RankBy::Walltime,
            RankArg::Iterations => RankBy::Iterations,
        };
    }
    if let Some(c) = &a.catalog {
        cfg.labeling.catalog = Some(c.clone());
    }
    if let Some(v) = a.rtol {
        cfg.solver.rtol = v;
    }
    if let Some(v) = a.max_iters {
        cfg.solver.max_iters = Some(v);
    }
    if let Some(v) = a.timeout {
        cfg.solver.timeout = v;
    }
    if let Some(v) = a.repeats {
        cfg.labeling.options.repeats = v;
    }
}

fn apply_features(cfg: &mut RunConfig, a: &FeatureArgs) {
    if let Some(mode) = a.mode {
        cfg.features.mode = mode;
    }
    if let Some(m) = a.m {
        cfg.features.m = m;
    }
}

fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) -> Result<()> {
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Gen(a) => {
            let g = &mut cfg.generation;
            if let Some(c) = a.count {
                g.count = c;
            }
            if let Some(f) = &a.families {
                g.ranges.families = f.iter().map(|s| PdeFamily::parse(s)).collect::<raf_core::Result<_>>()?;
            }
            if let Some(v) = a.min_order {
                g.ranges.min_order = v;
            }
            if let Some(v) = a.max_order {
                g.ranges.max_order = v;
            }
            if a.balance.is_some() {
                g.balance = a.balance;
            }
            apply_solve(cfg, &a.solve);
        }
        Command::Label(a) => apply_solve(cfg, &a.solve),
        Command::Extract(a) => apply_features(cfg, &a.features),
        Command::Render(a) => apply_features(cfg, &a.features),
        Command::Train(a) => {
            let t = &mut cfg.training;
            if let Some(v) = a.epochs {
                t.max_epochs = v;
            }
            if let Some(v) = a.batch_size {
                t.batch_size = v;
            }
            if let Some(v) = a.patience {
                t.patience = v;
            }
            if let Some(v) = a.lr {
                t.learning_rate = v;
            }
            if let Some(v) = &a.mask {
                t.mask = v.clone();
            }
            if let Some(v) = a.mask_mode {
                t.mask_mode = match v {
                    MaskModeArg::Zero => MaskMode::Zero,
                    MaskModeArg::Strict => MaskMode::Strict,
                };
            }
        }
        Command::Predict(_) | Command::Eval(_) => {}
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    apply_overrides(&mut cfg, &cli)?;
    cfg.validate()?;
    let threads = pipeline::configure_threads();
    log::info!("resolved configuration ({threads} worker threads):\n{}", cfg.to_toml());

    match cli.command {
        Command::Gen(a) => {
            let r = pipeline::gen_corpus(&cfg, &a.out)?;
            println!(
                "wrote {} matrices to {} ({} drawn, {} unlabelable, {} dropped by balancing)",
                r.summary.count,
                a.out.display(),
                r.drawn,
                r.unlabelable,
                r.dropped
            );
            for (name, n) in &r.summary.classes {
                println!("  {name:<20} {n}");
            }
        }
        Command::Label(a) => {
            let manifest = a.manifest.unwrap_or_else(|| a.dir.join("manifest.jsonl"));
            let r = pipeline::label_directory(&cfg, &a.dir, &manifest, a.strict)?;
            println!(
                "labeled {}, unlabelable {}, skipped {} -> {}",
                r.labeled,
                r.unlabelable,
                r.skipped.len(),
                manifest.display()
            );
        }
        Command::Extract(a) => {
            let r = pipeline::extract_features(&cfg, &a.manifest, &a.out, a.strict)?;
            println!("wrote {} feature records, skipped {}", r.written, r.skipped.len());
        }
        Command::Render(a) => {
            let input = a.manifest.or(a.matrix).expect("clap requires one input");
            let n = pipeline::render_images(&cfg, &input, &a.out)?;
            println!("wrote {n} images to {}", a.out.display());
        }
        Command::Train(a) => {
            let r = pipeline::train_model(&cfg, &a.manifest, &a.features, &a.model)?;
            let best = &r.history.epochs[r.history.best_epoch.saturating_sub(1).min(r.history.epochs.len() - 1)];
            println!(
                "trained on {} samples ({} / {} / {}); best epoch {} val loss {:.4} val accuracy {:.3}",
                r.samples, r.train, r.val, r.test, r.history.best_epoch, best.val_loss, best.val_accuracy
            );
        }
        Command::Predict(a) => {
            let input = match (a.matrix, a.features) {
                (Some(m), _) => PredictInput::Matrix(m),
                (None, Some(f)) => PredictInput::Features(f),
                (None, None) => unreachable!("clap requires one input"),
            };
            let range = a.order_range.map(|r| DatasetOrderStats::new(r[0], r[1])).transpose()?;
            for m in pipeline::predict(&a.model, &input, a.top, range)? {
                println!("{} {} {:.6}", m.rank, m.method, m.probability);
            }
        }
        Command::Eval(a) => {
            let report = pipeline::evaluate(&a.model, &a.manifest, &a.features, a.subset, a.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if let Error::Incomplete { .. } = e {
                return ExitCode::from(2);
            }
            ExitCode::FAILURE
        }
    }
}
