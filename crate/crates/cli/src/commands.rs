use std::fs;
use std::path::{Path, PathBuf};

use treetomo::estimation::{collect_batch_capped, consistency_curve, consistency_tsv, default_t_cap, estimate_kernel};
use treetomo::format;
use treetomo::{
    first_hitting_joint, known_rows, random_kernel, random_tree, recover_all_with, segment, spherical_augmentation,
    star, ArithmeticMode, AugmentedTree, Error, KernelScope, Layer, RangePolicy, Rational, RecoveryOptions,
    RecoveryReport, RootedTree, Scalar, TransitionKernel,
};

use crate::{
    ConsistencyArgs, EstimateArgs, ForwardArgs, GenArgs, InvertArgs, KernelSpec, Mode, RoundtripArgs, SampleArgs,
    Scope, TreeSpec,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// Exit status and a short machine-readable kind.
    pub fn exit_code(&self) -> (u8, &'static str) {
        let core = match self {
            CliError::Io { .. } => return (1, "io"),
            CliError::File { source, .. } | CliError::Core(source) => source,
        };
        match core {
            Error::Io(_) => (1, "io"),
            Error::Format { .. }
            | Error::InsufficientTimeRange { .. }
            | Error::NotATree(_)
            | Error::UnknownVertex(_)
            | Error::InvalidParameter(_)
            | Error::InvalidKernel(_)
            | Error::MissingRow(_)
            | Error::DegreeMismatch { .. } => (2, "format"),
            Error::InsufficientData(_) | Error::ZeroDenominator { .. } => (3, "insufficient-data"),
            Error::OutOfRange { .. } | Error::RowSumViolation { .. } => (4, "out-of-range"),
            _ => (5, "internal"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_owned(), source })?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| CliError::Io { path, source })
}

/// Runs a parser on a file, attaching the path to format errors.
fn parse_file<T>(path: &Path, parse: impl FnOnce(&str) -> treetomo::Result<T>) -> Result<T> {
    parse(&read(path)?).map_err(|source| CliError::File { path: path.to_owned(), source })
}

/// A plain tree file is augmented on the fly; augmented files are taken as is.
fn load_tree(path: &Path) -> Result<AugmentedTree> {
    parse_file(path, |text| {
        let augmented = text.lines().any(|l| l.trim_start().starts_with("origin"));
        if augmented {
            format::parse_augmented(text)
        } else {
            spherical_augmentation(&format::parse_tree(text)?, 2)
        }
    })
}

fn load_kernel<S: Scalar>(path: &Path, aug: &AugmentedTree) -> Result<TransitionKernel<S>> {
    parse_file(path, |text| format::parse_kernel(text, aug.vertex_count()))
}

fn file_mode(path: &Path) -> Result<Mode> {
    Ok(match parse_file(path, format::kernel_mode)? {
        ArithmeticMode::Float64 => Mode::Float,
        ArithmeticMode::ExactRational => Mode::Rational,
    })
}

fn build_tree(spec: &TreeSpec, seed: u64) -> Result<AugmentedTree> {
    if spec.random_tree {
        // keep the tree stream apart from the kernel stream of the same seed
        let tree = random_tree(spec.rout, spec.max_vertices, seed ^ 0x7472_6565)?;
        return Ok(spherical_augmentation(&tree, 2)?);
    }
    let base: RootedTree = match spec.tree.as_str() {
        "edge" => segment(0, 1)?,
        "segment" => segment(spec.k, spec.l)?,
        "star" => star(spec.l, spec.n)?,
        path => return load_tree(Path::new(path)),
    };
    Ok(spherical_augmentation(&base, 2)?)
}

fn generate_kernel<S: Scalar>(aug: &AugmentedTree, spec: &KernelSpec) -> Result<TransitionKernel<S>> {
    let scope = match spec.scope {
        Scope::Lambda => KernelScope::LambdaOnly,
        Scope::All => KernelScope::AllVertices,
    };
    let floor = spec.floor.unwrap_or_else(|| {
        let tree = aug.full();
        let max_degree = tree.vertices().map(|v| tree.degree(v)).max().unwrap_or(1);
        (0.5 / max_degree as f64).min(0.05)
    });
    Ok(random_kernel(aug, spec.seed, floor, scope)?)
}

fn hull_time(aug: &AugmentedTree) -> usize {
    3 * aug.hull_radius() + 4
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let aug = build_tree(&args.tree, args.kernel.seed)?;
    let kernel = match args.mode {
        Mode::Float => format::write_kernel(&generate_kernel::<f64>(&aug, &args.kernel)?),
        Mode::Rational => format::write_kernel(&generate_kernel::<Rational>(&aug, &args.kernel)?),
    };
    write(&args.out, "tree.txt", &format::write_augmented(&aug))?;
    write(&args.out, "kernel.txt", &kernel)
}

fn forward_in<S: Scalar>(args: &ForwardArgs, aug: &AugmentedTree) -> Result<()> {
    let kernel = load_kernel::<S>(&args.kernel, aug)?;
    let t_max = args.t_max.unwrap_or_else(|| hull_time(aug));
    let p_in = first_hitting_joint(aug, &kernel, Layer::Inner, t_max)?;
    let p_out = first_hitting_joint(aug, &kernel, Layer::Outer, t_max)?;
    write(&args.out, "p_in.tsv", &format::write_distribution(&p_in))?;
    write(&args.out, "p_out.tsv", &format::write_distribution(&p_out))
}

pub fn forward(args: &ForwardArgs) -> Result<()> {
    let aug = load_tree(&args.tree)?;
    match args.mode.map_or_else(|| file_mode(&args.kernel), Ok)? {
        Mode::Float => forward_in::<f64>(args, &aug),
        Mode::Rational => forward_in::<Rational>(args, &aug),
    }
}

/// Known rows from `kernel` when given, otherwise the observer's defaults.
fn known_part<S: Scalar>(kernel: Option<&Path>, aug: &AugmentedTree) -> Result<TransitionKernel<S>> {
    match kernel {
        Some(path) => Ok(load_kernel::<S>(path, aug)?.known_part()),
        None => Ok(known_rows(aug)?),
    }
}

fn score<S: Scalar>(report: &mut RecoveryReport<S>, truth: Option<&Path>, aug: &AugmentedTree) -> Result<()> {
    if let Some(path) = truth {
        report.compare_with(&load_kernel::<S>(path, aug)?);
    }
    Ok(())
}

fn summary<S: Scalar>(report: &RecoveryReport<S>) {
    println!("max_time_read {}", report.max_time_read);
    println!("flags {}", report.flags.len());
    if let Some(err) = report.max_error {
        println!("max_error {err:.16e}");
    }
}

fn invert_in<S: Scalar>(args: &InvertArgs, aug: &AugmentedTree) -> Result<()> {
    let p_in = parse_file(&args.p_in, |t| format::parse_distribution::<S>(t, aug, Layer::Inner))?;
    let p_out = parse_file(&args.p_out, |t| format::parse_distribution::<S>(t, aug, Layer::Outer))?;
    let known = known_part::<S>(args.kernel.as_deref(), aug)?;
    let policy = if args.clamp { RangePolicy::DEFAULT_CLAMP } else { RangePolicy::Strict };
    let options = RecoveryOptions { policy, ..Default::default() };
    let mut report = recover_all_with(aug, &known, &p_in, &p_out, &options)?;
    score(&mut report, args.truth.as_deref(), aug)?;
    write(&args.out, "report.txt", &format::write_report(&report))?;
    summary(&report);
    Ok(())
}

pub fn invert(args: &InvertArgs) -> Result<()> {
    let aug = load_tree(&args.tree)?;
    let mode = match (args.mode, &args.kernel) {
        (Some(mode), _) => mode,
        (None, Some(path)) => file_mode(path)?,
        (None, None) => Mode::Float,
    };
    match mode {
        Mode::Float => invert_in::<f64>(args, &aug),
        Mode::Rational => invert_in::<Rational>(args, &aug),
    }
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let aug = load_tree(&args.tree)?;
    let kernel = load_kernel::<f64>(&args.kernel, &aug)?;
    let t_cap = args.t_max.unwrap_or_else(|| default_t_cap(&aug));
    let batch = collect_batch_capped(&aug, &kernel, args.n, args.seed, args.workers, t_cap)?;
    write(&args.out, "batch.txt", &format::write_batch(&batch))
}

fn estimate_in<S: Scalar>(args: &EstimateArgs, aug: &AugmentedTree) -> Result<()> {
    let batch = parse_file(&args.batch, format::parse_batch)?;
    let known = known_part::<S>(args.kernel.as_deref(), aug)?;
    let mut report = estimate_kernel(aug, &known, &batch)?;
    score(&mut report, args.truth.as_deref(), aug)?;
    write(&args.out, "report.txt", &format::write_report(&report))?;
    summary(&report);
    Ok(())
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let aug = load_tree(&args.tree)?;
    match args.mode {
        Mode::Float => estimate_in::<f64>(args, &aug),
        Mode::Rational => estimate_in::<Rational>(args, &aug),
    }
}

fn roundtrip_in<S: Scalar>(args: &RoundtripArgs, aug: &AugmentedTree) -> Result<()> {
    let truth = generate_kernel::<S>(aug, &args.kernel)?;
    let t_max = hull_time(aug);
    let p_in = first_hitting_joint(aug, &truth, Layer::Inner, t_max)?;
    let p_out = first_hitting_joint(aug, &truth, Layer::Outer, t_max)?;
    let mut report = recover_all_with(aug, &truth.known_part(), &p_in, &p_out, &RecoveryOptions::default())?;
    report.compare_with(&truth);
    if let Some(dir) = &args.out {
        write(dir, "tree.txt", &format::write_augmented(aug))?;
        write(dir, "kernel.txt", &format::write_kernel(&truth))?;
        write(dir, "p_in.tsv", &format::write_distribution(&p_in))?;
        write(dir, "p_out.tsv", &format::write_distribution(&p_out))?;
        write(dir, "report.txt", &format::write_report(&report))?;
    }
    println!("max_error {:.16e}", report.max_error.unwrap_or(f64::INFINITY));
    println!("max_time_read {}", report.max_time_read);
    Ok(())
}

pub fn roundtrip(args: &RoundtripArgs) -> Result<()> {
    let aug = build_tree(&args.tree, args.kernel.seed)?;
    match args.mode {
        Mode::Float => roundtrip_in::<f64>(args, &aug),
        Mode::Rational => roundtrip_in::<Rational>(args, &aug),
    }
}

pub fn consistency(args: &ConsistencyArgs) -> Result<()> {
    let aug = build_tree(&args.tree, args.kernel.seed)?;
    let truth = match &args.kernel_file {
        Some(path) => load_kernel::<f64>(path, &aug)?,
        None => generate_kernel::<f64>(&aug, &args.kernel)?,
    };
    let seeds: Vec<u64> = (1..=args.seeds).collect();
    let rows = consistency_curve(&aug, &truth, &args.n_grid, &seeds, args.workers)?;
    let table = consistency_tsv(&rows);
    match &args.out {
        Some(dir) => write(dir, "consistency.tsv", &table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
