//! Command-line front end: argument parsing, config resolution, and the
//! error-to-exit-code contract. The work itself lives in [`jobs`].

pub mod config;
pub mod error;
pub mod jobs;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fbs_unroll::experiments::{DataSpec, PerturbTarget};

use crate::config::{load_config, RunConfig, StabilityModeKind};
use crate::error::CliError;
use crate::jobs::{execute, rerun, Job, PlotSpec, Split};

#[derive(Debug, Parser)]
#[command(
    name = "fbs-unroll",
    version,
    about = "Unrolled forward-backward splitting experiments"
)]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "FBS_UNROLL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic sparse-recovery dataset.
    GenData(GenDataArgs),
    /// Train one network and write its loss curve.
    Train(TrainArgs),
    /// Train across depths and tabulate the final losses.
    SweepDepth(SweepArgs),
    /// Evaluate a control through the deep-layer limit solver.
    LimitEval(LimitArgs),
    /// Compare discrete objectives of projected controls with the limit.
    GammaCheck(GammaArgs),
    /// Retrain under shrinking data perturbations.
    Stability(StabilityArgs),
    /// Draw two columns of a CSV table as an SVG line chart.
    Plot(PlotArgs),
    /// Replay the run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config (JSON if the name ends in .json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file; generated from the [data] section when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainOverrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seed of the epoch shuffles.
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.r0 = self.r0.unwrap_or(t.r0);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.seed = self.seed.unwrap_or(t.seed);
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainOverrides,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Also write the trained parameters here.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainOverrides,
    /// Comma-separated, strictly increasing depths.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Also write every depth's loss curve (long format) here.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LimitArgs {
    #[command(flatten)]
    common: Common,
    /// Control or network-parameter file.
    #[arg(long)]
    control: PathBuf,
    #[arg(long)]
    n_ref: Option<usize>,
    #[arg(long, value_parser = parse_split, default_value = "train")]
    split: Split,
}

#[derive(Debug, Args)]
struct GammaArgs {
    #[command(flatten)]
    common: Common,
    /// Target control; a synthetic smooth control is used when absent.
    #[arg(long)]
    control: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    n_ref: Option<usize>,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated subset of x0, b, y, all.
    #[arg(long, value_delimiter = ',', value_parser = parse_target)]
    target: Option<Vec<PerturbTarget>>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Evaluate the continuous objective at `depth` instead of the discrete one.
    #[arg(long)]
    continuous: bool,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    /// Column whose values split the rows into separate lines.
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    log_y: bool,
    #[arg(long)]
    title: Option<String>,
}

#[derive(Debug, Args)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
}

fn parse_target(s: &str) -> Result<PerturbTarget, String> {
    match s {
        "x0" => Ok(PerturbTarget::X0),
        "b" => Ok(PerturbTarget::B),
        "y" => Ok(PerturbTarget::Y),
        "all" => Ok(PerturbTarget::All),
        _ => Err(format!("expected one of x0, b, y, all; got '{s}'")),
    }
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        _ => Err(format!("expected train or val; got '{s}'")),
    }
}

fn resolved(cfg: RunConfig) -> Result<RunConfig, CliError> {
    cfg.validate()?;
    Ok(cfg)
}

/// Turns parsed arguments into a self-contained job.
fn build_job(command: Command) -> Result<Job, CliError> {
    Ok(match command {
        Command::GenData(a) => {
            let mut d: DataSpec = load_config(a.config.as_deref())?.data;
            d.m = a.m.unwrap_or(d.m);
            d.n = a.n.unwrap_or(d.n);
            d.train = a.train.unwrap_or(d.train);
            d.val = a.val.unwrap_or(d.val);
            d.sparsity = a.sparsity.unwrap_or(d.sparsity);
            d.noise = a.noise.unwrap_or(d.noise);
            d.seed = a.seed.unwrap_or(d.seed);
            d.validate().map_err(|e| CliError::Config(format!("[data] {e}")))?;
            Job::GenData { data: d, out: a.out }
        }
        Command::Train(a) => {
            let mut cfg = load_config(a.common.config.as_deref())?;
            a.train.apply(&mut cfg);
            cfg.network.depth = a.depth.unwrap_or(cfg.network.depth);
            cfg.network.horizon = a.horizon.unwrap_or(cfg.network.horizon);
            Job::Train {
                config: resolved(cfg)?,
                data: a.common.data,
                out: a.common.out,
                params: a.params,
            }
        }
        Command::SweepDepth(a) => {
            let mut cfg = load_config(a.common.config.as_deref())?;
            a.train.apply(&mut cfg);
            if let Some(l) = a.layers {
                cfg.sweep.layers = l;
            }
            Job::SweepDepth {
                config: resolved(cfg)?,
                data: a.common.data,
                out: a.common.out,
                curves: a.curves,
            }
        }
        Command::LimitEval(a) => {
            let mut cfg = load_config(a.common.config.as_deref())?;
            cfg.limit.n_ref = a.n_ref.unwrap_or(cfg.limit.n_ref);
            Job::LimitEval {
                config: resolved(cfg)?,
                control: a.control,
                data: a.common.data,
                split: a.split,
                out: a.common.out,
            }
        }
        Command::GammaCheck(a) => {
            let mut cfg = load_config(a.common.config.as_deref())?;
            if let Some(l) = a.layers {
                cfg.gamma.layers = l;
            }
            cfg.gamma.n_ref = a.n_ref.unwrap_or(cfg.gamma.n_ref);
            Job::GammaCheck {
                config: resolved(cfg)?,
                control: a.control,
                data: a.common.data,
                out: a.common.out,
            }
        }
        Command::Stability(a) => {
            let mut cfg = load_config(a.common.config.as_deref())?;
            let s = &mut cfg.stability;
            if let Some(t) = a.target {
                s.targets = t;
            }
            s.depth = a.depth.unwrap_or(s.depth);
            s.r0 = a.r0.unwrap_or(s.r0);
            if a.continuous {
                s.mode = StabilityModeKind::Continuous;
            }
            cfg.train.epochs = a.epochs.unwrap_or(cfg.train.epochs);
            Job::Stability {
                config: resolved(cfg)?,
                data: a.common.data,
                out: a.common.out,
            }
        }
        Command::Plot(a) => Job::Plot {
            plot: PlotSpec {
                input: a.input,
                x: a.x,
                y: a.y,
                group: a.group,
                log_y: a.log_y,
                title: a.title,
            },
            out: a.out,
        },
        Command::Rerun(_) => unreachable!("handled before job construction"),
    })
}

/// Collapses a clap message into one line, keeping any suggestion.
fn usage_line(err: &clap::Error) -> String {
    err.to_string()
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .map(|l| l.strip_prefix("error: ").unwrap_or(l))
        .collect::<Vec<_>>()
        .join("; ")
}

fn report_error(e: &CliError) -> i32 {
    let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{line}");
    e.exit_code()
}

fn dispatch(cli: Cli, argv: &[String]) -> Result<String, CliError> {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Rerun(a) => rerun(&a.manifest, argv),
        command => execute(&build_job(command)?, argv),
    })
}

/// Runs one invocation; `argv[0]` is the program name. Returns the exit
/// code: 0 on success, 2 when a computation produced non-finite values,
/// 1 for every other failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            return report_error(&CliError::Usage(usage_line(&e)));
        }
    };
    let argv: Vec<String> = argv.iter().map(|s| s.to_string_lossy().into_owned()).collect();
    match dispatch(cli, &argv) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => report_error(&e),
    }
}
