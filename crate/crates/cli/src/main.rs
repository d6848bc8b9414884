mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use smoe::edge::{edge_init_stages, importance_scores, write_segments_csv};
use smoe::imaging::{load_image, mse, psnr, save_image, ssim};
use smoe::model::{load_model, reconstruct, save_model};
use smoe::optimizer::{fit_pipeline_with, InitMode};
use smoe::{grid_init, Error, Image, InitConfig, SmoeModel, TrainConfig};

use crate::config::ConfigFile;

/// Steered mixture-of-experts image fitting with edge-aligned initialization.
#[derive(Parser, Debug)]
#[command(name = "smoe", version, about)]
struct Cli {
    /// Worker threads; 1 gives bit-exact reruns. Defaults to all cores.
    #[arg(long, global = true, env = "SMOE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an initial model without training.
    Init(InitArgs),
    /// Tile, initialize, train, merge and fine-tune.
    Fit(FitArgs),
    /// Render a model file to a PGM image.
    Reconstruct(ReconstructArgs),
    /// Print PSNR, SSIM and MSE between two images.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Edge,
    Grid,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "edge" => Ok(Mode::Edge),
            "grid" => Ok(Mode::Grid),
            other => Err(format!("unknown mode `{other}` (expected edge or grid)")),
        }
    }
}

/// Initialization settings shared by `init` and `fit`.
#[derive(Args, Debug)]
struct InitFlags {
    /// Flat `key = value` file with defaults for any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `edge` or `grid` [default: edge]
    #[arg(long)]
    mode: Option<Mode>,
    /// Kernels per axis for grid mode and the edge fallback [default: 8]
    #[arg(long)]
    grid: Option<usize>,
    /// Segment budget; at most two kernels per segment [default: 128]
    #[arg(long)]
    max_pts: Option<usize>,
    /// Kernel pair separation in pixels [default: 4]
    #[arg(long)]
    delta_mu: Option<f64>,
    /// Weight of the dissimilar-orientation distance in the score [default: 0.1]
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    canny_sigma: Option<f64>,
    #[arg(long)]
    canny_low: Option<f64>,
    #[arg(long)]
    canny_high: Option<f64>,
    /// Expert refinement step [default: 0.1]
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    expert_iters: Option<usize>,
    /// Keep refined experts inside [0, 1] [default: true]
    #[arg(long)]
    bounded_experts: Option<bool>,
}

#[derive(Args, Debug)]
struct TrainFlags {
    /// Tile edge length in pixels [default: 256]
    #[arg(long)]
    tile: Option<usize>,
    /// Adam learning rate [default: 0.005]
    #[arg(long)]
    lr: Option<f64>,
    /// Weight of the (sum alpha)^2 regularizer [default: 1e-7]
    #[arg(long)]
    reg: Option<f64>,
    /// Prune kernels whose alpha falls below this; 0 disables [default: 0.001]
    #[arg(long)]
    prune: Option<f64>,
    /// Iteration cap per training phase [default: 2000]
    #[arg(long)]
    iters: Option<usize>,
    /// Relative improvement per 50 iterations that ends a phase [default: 1e-7]
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct InitArgs {
    #[arg(long)]
    image: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Use a grid when the image has no edges instead of failing.
    #[arg(long)]
    grid_fallback: bool,
    /// Write the Canny mask as PGM.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Write the candidate segments and their scores as CSV.
    #[arg(long)]
    segments: Option<PathBuf>,
    #[command(flatten)]
    init: InitFlags,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    image: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Per-phase report CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Reconstruction of the final model as PGM.
    #[arg(long)]
    recon: Option<PathBuf>,
    /// Per-iteration loss trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    init: InitFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(Error::EmptyEdgeMask) => 3,
            Failure::Core(Error::NonFiniteLoss { .. }) => 4,
            _ => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => f.write_str(msg),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn with_path<T>(path: &Path, r: smoe::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

struct InitSettings {
    mode: Mode,
    grid: usize,
    cfg: InitConfig,
}

fn resolve_init(flags: &InitFlags, file: &ConfigFile) -> CliResult<InitSettings> {
    let d = InitConfig::default();
    let cfg = InitConfig {
        canny_sigma: file
            .pick(flags.canny_sigma, "canny-sigma", d.canny_sigma)
            .map_err(Failure::Usage)?,
        canny_low: file
            .pick(flags.canny_low, "canny-low", d.canny_low)
            .map_err(Failure::Usage)?,
        canny_high: file
            .pick(flags.canny_high, "canny-high", d.canny_high)
            .map_err(Failure::Usage)?,
        lambda: file
            .pick(flags.lambda, "lambda", d.lambda)
            .map_err(Failure::Usage)?,
        max_pts: file
            .pick(flags.max_pts, "max-pts", d.max_pts)
            .map_err(Failure::Usage)?,
        delta_mu: file
            .pick(flags.delta_mu, "delta-mu", d.delta_mu)
            .map_err(Failure::Usage)?,
        eta: file.pick(flags.eta, "eta", d.eta).map_err(Failure::Usage)?,
        expert_iters: file
            .pick(flags.expert_iters, "expert-iters", d.expert_iters)
            .map_err(Failure::Usage)?,
        bounded_experts: file
            .pick(flags.bounded_experts, "bounded-experts", d.bounded_experts)
            .map_err(Failure::Usage)?,
        ..d
    };
    cfg.validate()?;
    let grid = file.pick(flags.grid, "grid", 8).map_err(Failure::Usage)?;
    if grid == 0 {
        return Err(Failure::Usage("--grid must be positive".into()));
    }
    Ok(InitSettings {
        mode: file
            .pick(flags.mode, "mode", Mode::Edge)
            .map_err(Failure::Usage)?,
        grid,
        cfg,
    })
}

fn resolve_train(flags: &TrainFlags, file: &ConfigFile) -> CliResult<(TrainConfig, usize)> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: file
            .pick(flags.lr, "lr", d.learning_rate)
            .map_err(Failure::Usage)?,
        reg_weight: file
            .pick(flags.reg, "reg", d.reg_weight)
            .map_err(Failure::Usage)?,
        prune_threshold: file
            .pick(flags.prune, "prune", d.prune_threshold)
            .map_err(Failure::Usage)?,
        convergence_tol: file
            .pick(flags.tol, "tol", d.convergence_tol)
            .map_err(Failure::Usage)?,
        max_iters: file
            .pick(flags.iters, "iters", d.max_iters)
            .map_err(Failure::Usage)?,
        ..d
    };
    cfg.validate()?;
    let tile = file.pick(flags.tile, "tile", 256).map_err(Failure::Usage)?;
    Ok((cfg, tile))
}

fn config_file(path: Option<&PathBuf>) -> CliResult<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p).map_err(Failure::Usage),
        None => Ok(ConfigFile::default()),
    }
}

fn cmd_init(args: &InitArgs) -> CliResult<()> {
    let file = config_file(args.init.config.as_ref())?;
    let settings = resolve_init(&args.init, &file)?;
    let image = with_path(&args.image, load_image(&args.image))?;
    let start = Instant::now();
    let mut fallback = false;
    let model = match settings.mode {
        Mode::Grid => grid_init(&image, settings.grid)?,
        Mode::Edge => match edge_init_stages(&image, &settings.cfg) {
            Ok(stages) => {
                if let Some(path) = &args.mask {
                    with_path(path, save_image(&stages.mask.to_image(), path))?;
                }
                if let Some(path) = &args.segments {
                    let scores = importance_scores(
                        &stages.candidates,
                        settings.cfg.lambda,
                        image.diagonal(),
                    );
                    with_path(
                        path,
                        write_segments_csv(&stages.candidates, &scores, create(path)?),
                    )?;
                }
                stages.model
            }
            Err(Error::EmptyEdgeMask) if args.grid_fallback => {
                log::warn!("no edges found; using a {0}x{0} grid", settings.grid);
                fallback = true;
                grid_init(&image, settings.grid)?
            }
            Err(e) => return Err(e.into()),
        },
    };
    let seconds = start.elapsed().as_secs_f64();
    with_path(&args.out, save_model(&model, &args.out))?;
    println!("kernels,fallback,seconds");
    println!("{},{},{}", model.len(), fallback, seconds);
    Ok(())
}

fn print_quality(model: &SmoeModel, image: &Image, seconds: f64) -> CliResult<Image> {
    let recon = reconstruct(model)?;
    let s = match ssim(&recon, image) {
        Ok(v) => v,
        Err(Error::ImageTooSmall { .. }) => f64::NAN,
        Err(e) => return Err(e.into()),
    };
    println!("kernels,psnr_db,ssim,mse,seconds");
    println!(
        "{},{:?},{:?},{:?},{}",
        model.len(),
        psnr(&recon, image)?,
        s,
        mse(&recon, image)?,
        seconds
    );
    Ok(recon)
}

fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let file = config_file(args.init.config.as_ref())?;
    let settings = resolve_init(&args.init, &file)?;
    let (train_cfg, tile) = resolve_train(&args.train, &file)?;
    let image = with_path(&args.image, load_image(&args.image))?;
    let mode = match settings.mode {
        Mode::Edge => InitMode::Edge(settings.cfg),
        Mode::Grid => InitMode::Grid {
            per_axis: settings.grid,
        },
    };
    let start = Instant::now();
    let (model, report) = fit_pipeline_with(&image, &mode, &train_cfg, tile)?;
    let seconds = start.elapsed().as_secs_f64();
    with_path(&args.out, save_model(&model, &args.out))?;
    if let Some(path) = &args.report {
        with_path(path, report.write_csv(create(path)?))?;
    }
    if let Some(path) = &args.trace {
        with_path(path, report.write_trace_csv(create(path)?))?;
    }
    let recon = print_quality(&model, &image, seconds)?;
    if let Some(path) = &args.recon {
        with_path(path, save_image(&recon, path))?;
    }
    Ok(())
}

fn cmd_reconstruct(args: &ReconstructArgs) -> CliResult<()> {
    let model = with_path(&args.model, load_model(&args.model))?;
    let image = reconstruct(&model)?;
    with_path(&args.out, save_image(&image, &args.out))
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let a = with_path(&args.a, load_image(&args.a))?;
    let b = with_path(&args.b, load_image(&args.b))?;
    let p = psnr(&a, &b)?;
    let s = ssim(&a, &b)?;
    let m = mse(&a, &b)?;
    println!("psnr_db,ssim,mse");
    println!("{p:?},{s:?},{m:?}");
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Init(a) => cmd_init(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("smoe: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
