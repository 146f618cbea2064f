//! `spnorm`: generate synthetic completion problems, run the factorized
//! Schatten-p solver over parameter grids, and reproduce the benchmark suites
//! as CSV.
//!
//! Exit status is 0 on success, 1 when any run failed, and 2 for usage
//! errors.

mod bench;
mod config;
mod record;
mod runs;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use spnorm_core::experiments::{
    complement_mask, gen_synthetic, parse_movielens, read_fixture, read_truth, split, write_fixture,
    write_movielens, write_truth, SynthSpec,
};
use spnorm_core::trials::noise_calibrated_lambda;
use spnorm_core::{ObservedMatrix, PExponent, SolverConfig};

pub use record::{RunRecord, COLUMNS};
pub use runs::InitRank;
use runs::{execute_all, Job, Problem};

/// Default output directory for files the CLI names itself.
pub const OUT_DIR_ENV: &str = "SPNORM_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "spnorm", version, about = "Schatten-p matrix completion experiments")]
struct Cli {
    /// File of `key = value` lines supplying defaults for the subcommand's
    /// flags. Flags on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic instance and write it as a fixture.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Run the solver over a grid of settings on one data set.
    #[command(args_override_self = true)]
    Complete(CompleteArgs),
    /// Run a predefined benchmark suite.
    #[command(args_override_self = true)]
    Bench(bench::BenchArgs),
    /// Split a MovieLens ratings file into training and test files.
    #[command(args_override_self = true)]
    MovielensPrep(PrepArgs),
}

#[derive(Debug, Args)]
struct OutDir {
    /// Directory for generated files.
    #[arg(long, env = OUT_DIR_ENV, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rank: usize,
    /// Signal-to-noise ratio in dB; `inf` disables noise.
    #[arg(long, default_value_t = f64::INFINITY)]
    snr: f64,
    /// Fraction of entries left unobserved.
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixture path; the ground truth goes next to it with a `.truth`
    /// extension. Defaults to a name derived from the spec inside --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    dir: OutDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Args)]
struct CompleteArgs {
    /// Synthetic fixture written by `synth`.
    #[arg(long, conflicts_with = "movielens", required_unless_present = "movielens")]
    input: Option<PathBuf>,
    /// MovieLens `u.data`-format ratings.
    #[arg(long)]
    movielens: Option<PathBuf>,
    /// Held-out ratings to score against instead of splitting --movielens.
    #[arg(long, requires = "movielens")]
    test: Option<PathBuf>,
    /// Training fraction when splitting --movielens (split seed = run seed).
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,
    /// Rating range `min,max` for NMAE; defaults to the observed range.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    rating_range: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    p: Vec<f64>,
    /// Regularization weights.
    #[arg(long, value_delimiter = ',', required_unless_present = "lambda_scale")]
    lambda: Vec<f64>,
    /// Noise-calibrated weights (multiples of the observed noise level);
    /// needs a fixture with ground truth.
    #[arg(long, value_delimiter = ',', conflicts_with = "lambda")]
    lambda_scale: Vec<f64>,
    /// Initial widths: integers, or multiples of the true rank such as `0.5x`.
    #[arg(long, value_delimiter = ',', required = true)]
    init_rank: Vec<InitRank>,
    #[arg(long, value_delimiter = ',', default_value = "on")]
    escape: Vec<Toggle>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    output: OutputFlags,
}

#[derive(Debug, Args)]
pub(crate) struct SolverFlags {
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative-change convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Column pruning threshold.
    #[arg(long)]
    thres: Option<f64>,
    /// Maximum successful escapes per run (default: the initial width).
    #[arg(long)]
    escape_budget: Option<usize>,
}

impl SolverFlags {
    fn config(&self, p: f64, lambda: f64, width: usize, escape: Toggle, seed: u64) -> Result<SolverConfig, CliError> {
        let p = PExponent::new(p).map_err(usage)?;
        let mut cfg = SolverConfig::new(p, lambda, width)
            .with_escape(escape == Toggle::On)
            .with_seed(seed);
        if let Some(v) = self.max_iter {
            cfg = cfg.with_max_iter(v);
        }
        if let Some(v) = self.tol {
            cfg = cfg.with_conv_tol(v);
        }
        if let Some(v) = self.thres {
            cfg = cfg.with_prune_thres(v);
        }
        if let Some(v) = self.escape_budget {
            cfg = cfg.with_escape_budget(v);
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub(crate) struct OutputFlags {
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the records as a JSON array to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Leave `wall_ms` empty so output is byte-identical across runs.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true", default_value_t = false)]
    stable: bool,
}

#[derive(Debug, Args)]
struct PrepArgs {
    /// MovieLens `u.data` file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    dir: OutDir,
}

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit status.
pub fn run(argv: Vec<OsString>) -> u8 {
    let argv = match config::expand_args(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Complete(a) => cmd_complete(&a),
        Command::Bench(a) => bench::cmd_bench(&a),
        Command::MovielensPrep(a) => cmd_prep(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn truth_path(fixture: &Path) -> PathBuf {
    fixture.with_extension("truth")
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        m: a.m,
        n: a.n,
        rank: a.rank,
        snr_db: a.snr,
        missing_rate: a.missing,
        seed: a.seed,
    };
    spec.validate().map_err(usage)?;
    let gt = gen_synthetic(&spec).map_err(runtime)?;
    let path = a.out.clone().unwrap_or_else(|| {
        a.dir
            .out_dir
            .join(format!("synth_{}x{}_r{}_seed{}.txt", a.m, a.n, a.rank, a.seed))
    });
    create_parent(&path)?;
    write_fixture(std::fs::File::create(&path)?, &spec, &gt.y_obs).map_err(runtime)?;
    let truth = truth_path(&path);
    write_truth(std::fs::File::create(&truth)?, &spec, &gt.x_true).map_err(runtime)?;
    println!("{}", path.display());
    println!(
        "{}x{} rank {} snr {} dB, {} observed, {} held out; truth in {}",
        a.m,
        a.n,
        a.rank,
        a.snr,
        gt.y_obs.len(),
        gt.test_mask.len(),
        truth.display()
    );
    Ok(())
}

fn load_fixture(path: &Path) -> Result<(SynthSpec, Problem), CliError> {
    let file = std::fs::File::open(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let (spec, obs) = read_fixture(file).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let truth_file = truth_path(path);
    let truth = if truth_file.exists() {
        let (_, x) = read_truth(std::fs::File::open(&truth_file)?).map_err(runtime)?;
        if x.shape() != obs.shape() {
            return Err(runtime(format!("{} does not match the fixture shape", truth_file.display())));
        }
        Some((x, complement_mask(&obs)))
    } else {
        None
    };
    let problem = Problem {
        train: obs,
        truth,
        ratings: None,
        true_rank: Some(spec.rank),
        missing: Some(spec.missing_rate),
        snr_db: Some(spec.snr_db),
    };
    Ok((spec, problem))
}

/// Re-indexes two rating sets onto their common shape.
fn common_shape(a: ObservedMatrix, b: ObservedMatrix) -> Result<(ObservedMatrix, ObservedMatrix), CliError> {
    let rows = a.rows().max(b.rows());
    let cols = a.cols().max(b.cols());
    let lift = |o: &ObservedMatrix| {
        let t = o.observations().iter().map(|x| (x.row, x.col, x.value)).collect();
        ObservedMatrix::new(rows, cols, t).map_err(runtime)
    };
    Ok((lift(&a)?, lift(&b)?))
}

fn value_range(obs: &ObservedMatrix) -> (f64, f64) {
    obs.values().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn ratings_problem(train: ObservedMatrix, test: ObservedMatrix, range: Option<&[f64]>) -> Result<Problem, CliError> {
    let range = match range {
        Some(r) => (r[0], r[1]),
        None => {
            let (a, b) = (value_range(&train), value_range(&test));
            (a.0.min(b.0), a.1.max(b.1))
        }
    };
    if !(range.1 > range.0) {
        return Err(usage(format!("rating range [{}, {}] is empty", range.0, range.1)));
    }
    let missing = 1.0 - train.len() as f64 / (train.rows() * train.cols()) as f64;
    Ok(Problem {
        train,
        truth: None,
        ratings: Some((test, range)),
        true_rank: None,
        missing: Some(missing),
        snr_db: None,
    })
}

fn cmd_complete(a: &CompleteArgs) -> Result<(), CliError> {
    // one problem per seed when the split depends on it
    let mut problems: Vec<(Option<u64>, Problem)> = Vec::new();
    let mut calibration = None;
    if let Some(path) = &a.input {
        let (spec, problem) = load_fixture(path)?;
        if !a.lambda_scale.is_empty() {
            let (x, _) = problem.truth.as_ref().ok_or_else(|| {
                usage(format!("--lambda-scale needs the ground truth file {}", truth_path(path).display()))
            })?;
            calibration = Some((spec, x.clone(), problem.train.len()));
        }
        problems.push((None, problem));
    } else if let Some(path) = &a.movielens {
        if !a.lambda_scale.is_empty() {
            return Err(usage("--lambda-scale is only available for synthetic fixtures"));
        }
        let obs = parse_movielens(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        if let Some(test_path) = &a.test {
            let test = parse_movielens(test_path).map_err(|e| runtime(format!("{}: {e}", test_path.display())))?;
            let (train, test) = common_shape(obs, test)?;
            problems.push((None, ratings_problem(train, test, a.rating_range.as_deref())?));
        } else {
            for &seed in &a.seed {
                let parts = split(&obs, a.train_frac, seed).map_err(usage)?;
                problems.push((Some(seed), ratings_problem(parts.train, parts.test, a.rating_range.as_deref())?));
            }
        }
    }

    let mut jobs = Vec::new();
    for &p in &a.p {
        let pe = PExponent::new(p).map_err(usage)?;
        let lambdas: Vec<f64> = match &calibration {
            Some((spec, x, observed)) => a
                .lambda_scale
                .iter()
                .map(|&k| {
                    noise_calibrated_lambda(spec, x, *observed, k, pe)
                        .ok_or_else(|| usage("--lambda-scale needs a noisy instance"))
                })
                .collect::<Result<_, _>>()?,
            None => a.lambda.clone(),
        };
        for &lambda in &lambdas {
            for &init in &a.init_rank {
                for &escape in &a.escape {
                    for &seed in &a.seed {
                        let problem = problems
                            .iter()
                            .find(|(s, _)| s.is_none() || *s == Some(seed))
                            .map(|(_, pr)| pr)
                            .expect("a problem exists for every seed");
                        let width = init.resolve(problem.true_rank).map_err(usage)?;
                        let cfg = a.solver.config(p, lambda, width, escape, seed)?;
                        jobs.push(Job {
                            suite: "complete",
                            problem,
                            cfg,
                        });
                    }
                }
            }
        }
    }
    let records = execute_all(&jobs, a.output.stable);
    finish(&records, &a.output)
}

/// Writes the records and reports failed runs through the exit status.
fn finish(records: &[RunRecord], out: &OutputFlags) -> Result<(), CliError> {
    record::write_csv_to(records, out.out.as_deref())?;
    if let Some(path) = &out.json {
        create_parent(path)?;
        record::write_json(records, path)?;
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(runtime(format!("{failed} of {} runs failed", records.len())));
    }
    Ok(())
}

fn cmd_prep(a: &PrepArgs) -> Result<(), CliError> {
    let obs = parse_movielens(&a.input).map_err(|e| runtime(format!("{}: {e}", a.input.display())))?;
    let parts = split(&obs, a.train_frac, a.seed).map_err(usage)?;
    std::fs::create_dir_all(&a.dir.out_dir)?;
    let train = a.dir.out_dir.join("train.data");
    let test = a.dir.out_dir.join("test.data");
    write_movielens(std::fs::File::create(&train)?, &parts.train).map_err(runtime)?;
    write_movielens(std::fs::File::create(&test)?, &parts.test).map_err(runtime)?;
    let (lo, hi) = value_range(&obs);
    println!(
        "{} users x {} items, {} ratings in [{lo}, {hi}]: {} train -> {}, {} test -> {}",
        obs.rows(),
        obs.cols(),
        obs.len(),
        parts.train.len(),
        train.display(),
        parts.test.len(),
        test.display()
    );
    Ok(())
}
