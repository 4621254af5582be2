//! `stochlod` command-line driver.

mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stochlod::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "stochlod", version, about = "Random multiscale diffusion with PG-LOD and NN-LOD surrogates")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON experiment configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel loops (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Single-threaded, bitwise reproducible mode.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Output directory (falls back to the config, then STOCHLOD_OUT, then ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw coefficient realizations and their contrasts.
    Sample(commands::SampleArgs),
    /// Generate the patch dataset of the configured coefficient class.
    GenDataset,
    /// Train the warm-start network on uniformly elliptic coefficients.
    Pretrain,
    /// Train a network on a generated dataset.
    Train(commands::TrainArgs),
    /// Compare NN-LOD with PG-LOD on fresh realizations.
    Eval(commands::EvalArgs),
    /// Monte Carlo means of FEM, PG-LOD and NN-LOD solutions.
    Mc(commands::McArgs),
    /// FEM vs PG-LOD mean discrepancy over coarse mesh sizes.
    Convergence(commands::ConvergenceArgs),
    /// Corrector truncation error against the patch order.
    Decay(commands::DecayArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::GenDataset => "dataset",
            Command::Pretrain => "pretrain",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Mc(_) => "mc",
            Command::Convergence(_) => "convergence",
            Command::Decay(_) => "decay",
        }
    }
}

/// Failures, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(stochlod::Error),
}

impl From<stochlod::Error> for CliError {
    fn from(e: stochlod::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => {
                write!(f, "{e}")?;
                let mut src = std::error::Error::source(e);
                while let Some(s) = src {
                    write!(f, ": {s}")?;
                    src = s.source();
                }
                Ok(())
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Reads a config file, reporting the key path of the first bad entry.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Usage(format!(
            "{}: invalid config at `{}`: {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })
}

fn resolve_config(g: &GlobalArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_root(g: &GlobalArgs, cfg: &ExperimentConfig) -> PathBuf {
    g.out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os("STOCHLOD_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn configure_threads(g: &GlobalArgs) -> CliResult<usize> {
    let n = if g.deterministic {
        1
    } else {
        g.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    };
    if n == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(n)
}

fn run(cli: Cli) -> CliResult<PathBuf> {
    let cfg = resolve_config(&cli.global)?;
    cfg.validate()?;
    let workers = configure_threads(&cli.global)?;
    let root = out_root(&cli.global, &cfg);
    let ctx = commands::Context {
        cfg,
        workers,
        deterministic: cli.global.deterministic,
    };
    let name = cli.command.name();
    output::staged(&root, name, |dir| {
        ctx.write_run_manifest(dir, name)?;
        match &cli.command {
            Command::Sample(a) => commands::sample(&ctx, a, dir),
            Command::GenDataset => commands::gen_dataset(&ctx, dir),
            Command::Pretrain => commands::pretrain(&ctx, dir),
            Command::Train(a) => commands::train(&ctx, a, &root, dir),
            Command::Eval(a) => commands::eval(&ctx, a, &root, dir),
            Command::Mc(a) => commands::mc(&ctx, a, dir),
            Command::Convergence(a) => commands::convergence(&ctx, a, dir),
            Command::Decay(a) => commands::decay(&ctx, a, dir),
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
