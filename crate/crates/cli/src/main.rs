//! `treetomo`: generate trees and kernels, solve forward, invert, sample and
//! estimate from the command line.
//!
//! Exit codes: 0 ok, 1 I/O, 2 format or usage, 3 insufficient data,
//! 4 out-of-range recovery, 5 internal. Failures print one line
//! `error\t<kind>\t<message>` on stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "treetomo", version, about = "Random-walk tomography on rooted trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write an augmented tree and a random kernel on it.
    Gen(GenArgs),
    /// Compute the exact hitting laws of both layers.
    Forward(ForwardArgs),
    /// Recover the base kernel from two hitting-law files.
    Invert(InvertArgs),
    /// Simulate probe walks and write their counts.
    Sample(SampleArgs),
    /// Estimate the base kernel from a batch of probe walks.
    Estimate(EstimateArgs),
    /// Generate, solve forward, invert and compare in one go.
    Roundtrip(RoundtripArgs),
    /// Estimation error over a grid of sample sizes and seeds.
    Consistency(ConsistencyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Float,
    Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    /// Random rows on the base tree, symmetric rows elsewhere.
    Lambda,
    /// Random rows on every vertex.
    All,
}

/// Where a tree comes from: a builtin family, a file, or a random draw.
#[derive(Debug, Clone, Args)]
pub struct TreeSpec {
    /// `edge`, `segment`, `star`, or a path to a tree file.
    #[arg(long, default_value = "star", conflicts_with = "random_tree")]
    tree: String,
    /// Draw a random tree of radius `--rout` instead.
    #[arg(long)]
    random_tree: bool,
    /// Radius of a random tree.
    #[arg(long, default_value_t = 3)]
    rout: usize,
    /// Vertex budget of a random tree.
    #[arg(long, default_value_t = 40)]
    max_vertices: usize,
    /// Negative length of a segment.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Arm length of a segment or star.
    #[arg(long, default_value_t = 1)]
    l: usize,
    /// Number of star arms.
    #[arg(long, default_value_t = 2)]
    n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct KernelSpec {
    #[arg(long, env = "TREETOMO_SEED", default_value_t = 0)]
    seed: u64,
    /// Smallest generated probability; defaults to min(0.05, 1 / (2 max degree)).
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long, value_enum, default_value_t = Scope::Lambda)]
    scope: Scope,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    tree: TreeSpec,
    #[command(flatten)]
    kernel: KernelSpec,
    #[arg(long, value_enum, default_value_t = Mode::Float)]
    mode: Mode,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    /// Tree file, plain or augmented.
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    kernel: PathBuf,
    /// Last time step to compute; defaults to 3R + 4.
    #[arg(long)]
    t_max: Option<usize>,
    /// Arithmetic; defaults to the kernel file's mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    p_in: PathBuf,
    #[arg(long)]
    p_out: PathBuf,
    /// Kernel whose known rows are used; base rows are ignored.
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// True kernel to score the recovery against.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Clamp out-of-range values instead of failing.
    #[arg(long)]
    clamp: bool,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    kernel: PathBuf,
    /// Number of walks.
    #[arg(long)]
    n: u64,
    #[arg(long, env = "TREETOMO_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Time cap; defaults to max(3R + 4, 64).
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    batch: PathBuf,
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Float)]
    mode: Mode,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[command(flatten)]
    tree: TreeSpec,
    #[command(flatten)]
    kernel: KernelSpec,
    #[arg(long, value_enum, default_value_t = Mode::Float)]
    mode: Mode,
    /// Also write every intermediate file here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConsistencyArgs {
    #[command(flatten)]
    tree: TreeSpec,
    #[command(flatten)]
    kernel: KernelSpec,
    /// True kernel on the tree given by `--tree <file>`; generated when absent.
    #[arg(long)]
    kernel_file: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [10_000u64, 100_000, 1_000_000])]
    n_grid: Vec<u64>,
    /// Sampling seeds `1..=seeds`.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write the table to `<out>/consistency.tsv` instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => commands::gen(&args),
        Command::Forward(args) => commands::forward(&args),
        Command::Invert(args) => commands::invert(&args),
        Command::Sample(args) => commands::sample(&args),
        Command::Estimate(args) => commands::estimate(&args),
        Command::Roundtrip(args) => commands::roundtrip(&args),
        Command::Consistency(args) => commands::consistency(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = err.exit_code();
            eprintln!("error\t{kind}\t{err}");
            ExitCode::from(code)
        }
    }
}
