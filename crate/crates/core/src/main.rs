use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use snnk::harness::{
    run_bundle, run_ft_table, run_pointwise, run_sweep, run_train, write_ft_table, write_train_rows, BundleConfig,
    EstimateConfig, FtTableConfig, SweepConfig, TrainRunConfig,
};
use snnk::{Result, SnnkError};

/// Scalable neural network kernels: estimation benchmarks, transform
/// tables, bundling reports and training runs. All output is CSV.
#[derive(Parser)]
#[command(name = "snnk", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON config for the subcommand; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Pointwise estimation of f(wᵀx + b) against the exact value. Also
    /// writes per-p summaries to `<out>.summary.csv`.
    Estimate,
    /// Pointwise estimation repeated over values of A, strategy or activation.
    Sweep,
    /// Fourier transforms and their four nonnegative parts.
    FtTable,
    /// Bundle a feedforward network; writes the bundled artifact to
    /// `<out>.bundle.json`.
    Bundle,
    /// Train a learnable-A layer on Gaussian blobs; one row per epoch and split.
    Train,
}

fn read<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(io::BufReader::new(File::open(path)?))?)
}

fn load<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    path.as_deref().map_or_else(|| Ok(T::default()), read)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn with_output(out: &Option<PathBuf>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}

/// Secondary outputs go next to `--out`, or to stderr without it.
fn with_side_output(out: &Option<PathBuf>, suffix: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => with_output(&Some(sibling(p, suffix)), f),
        None => f(&mut io::stderr().lock()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Estimate => {
            let mut cfg: EstimateConfig = load(&g.config)?;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            let report = run_pointwise(&cfg)?;
            with_output(&g.out, |w| report.write_rows(w))?;
            with_side_output(&g.out, ".summary.csv", |w| report.write_aggregates(w))
        }
        Command::Sweep => {
            let Some(path) = &g.config else {
                return Err(SnnkError::InvalidConfig("sweep needs --config with a sweep axis".into()));
            };
            let mut cfg: SweepConfig = read(path)?;
            cfg.base.seed = g.seed.unwrap_or(cfg.base.seed);
            let report = run_sweep(&cfg)?;
            with_output(&g.out, |w| report.write_rows(w))?;
            with_side_output(&g.out, ".summary.csv", |w| report.write_aggregates(w))
        }
        Command::FtTable => {
            let cfg: FtTableConfig = load(&g.config)?;
            let rows = run_ft_table(&cfg)?;
            with_output(&g.out, |w| write_ft_table(&rows, w))
        }
        Command::Bundle => {
            let mut cfg: BundleConfig = load(&g.config)?;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            let report = run_bundle(&cfg)?;
            with_output(&g.out, |w| report.write_csv(w))?;
            if let Some(p) = &g.out {
                let file = File::create(sibling(p, ".bundle.json"))?;
                serde_json::to_writer(BufWriter::new(file), &report.artifact)?;
            }
            Ok(())
        }
        Command::Train => {
            let mut cfg: TrainRunConfig = load(&g.config)?;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            let rows = run_train(&cfg)?;
            with_output(&g.out, |w| write_train_rows(&rows, w))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build();
    let result = match pool {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(SnnkError::InvalidConfig(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
