//! Predefined experiment grids at desk scale.
//!
//! * `table1`: initial rank multiples × escape on/off × p, on noisy synthetic
//!   instances (200×200, rank 10, 40% missing, 10 dB).
//! * `ptrend`: RE against p with a five-point noise-calibrated λ sweep
//!   (200×200, rank 20, 50% missing, 8 dB, initial rank 1.5r).
//! * `movielens`: NMAE against initial rank on a MovieLens ratings file at
//!   50% and 25% training fractions.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use spnorm_core::experiments::{complement_mask, gen_synthetic, parse_movielens, split, SynthSpec};
use spnorm_core::trials::{median, noise_calibrated_lambda};
use spnorm_core::PExponent;

use crate::record::{self, RunRecord};
use crate::runs::{execute_all, InitRank, Job, Problem};
use crate::{ratings_problem, runtime, usage, CliError, SolverFlags, Toggle, OUT_DIR_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Table1,
    Ptrend,
    Movielens,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Table1 => "table1",
            Suite::Ptrend => "ptrend",
            Suite::Movielens => "movielens",
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    suite: Suite,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    missing: Option<f64>,
    /// Number of seeds (instances for synthetic suites, splits for movielens).
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// λ as multiples of the observed noise level (synthetic suites).
    #[arg(long, value_delimiter = ',')]
    lambda_scale: Option<Vec<f64>>,
    /// Regularization weights (movielens).
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    init_rank: Option<Vec<InitRank>>,
    /// Training fractions (movielens).
    #[arg(long, value_delimiter = ',')]
    train_frac: Option<Vec<f64>>,
    /// MovieLens `u.data` file (movielens suite).
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Directory for `<suite>.csv` and `<suite>_summary.csv`.
    #[arg(long, env = OUT_DIR_ENV, default_value = "results")]
    out_dir: PathBuf,
    /// Also write `<suite>.json`.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true", default_value_t = false)]
    json: bool,
    /// Leave `wall_ms` empty so output is byte-identical across runs.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true", default_value_t = false)]
    stable: bool,
}

/// Median-aggregated cell of a suite's summary table.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub suite: &'static str,
    pub init_rank: String,
    pub p: f64,
    pub escape: &'static str,
    pub lambda_scale: Option<f64>,
    pub lambda: Option<f64>,
    pub train_frac: Option<f64>,
    pub runs: usize,
    pub median_re: Option<f64>,
    pub median_nmae: Option<f64>,
    pub median_final_rank: Option<f64>,
    pub best: bool,
}

fn init_label(init: InitRank) -> String {
    match init {
        InitRank::Absolute(d) => d.to_string(),
        InitRank::Multiple(k) => format!("{k}x"),
    }
}

fn toggle_name(t: Toggle) -> &'static str {
    match t {
        Toggle::On => "on",
        Toggle::Off => "off",
    }
}

fn med(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| median(&v))
}

struct Grid {
    m: usize,
    n: usize,
    rank: usize,
    snr: f64,
    missing: f64,
    seeds: u64,
    ps: Vec<f64>,
    scales: Vec<f64>,
    inits: Vec<InitRank>,
    escapes: Vec<Toggle>,
}

fn synthetic_grid(a: &BenchArgs) -> Grid {
    let (rank, snr, missing, ps, scales, inits, escapes) = match a.suite {
        Suite::Table1 => (
            10,
            10.0,
            0.4,
            vec![0.5, 0.3],
            vec![2.0],
            [0.5, 0.75, 1.0, 1.25, 1.5].map(InitRank::Multiple).to_vec(),
            vec![Toggle::On, Toggle::Off],
        ),
        _ => (
            20,
            8.0,
            0.5,
            vec![0.3, 0.5, 0.7, 1.0],
            vec![0.25, 0.5, 1.0, 2.0, 4.0],
            vec![InitRank::Multiple(1.5)],
            vec![Toggle::Off],
        ),
    };
    Grid {
        m: a.m.unwrap_or(200),
        n: a.n.unwrap_or(200),
        rank: a.rank.unwrap_or(rank),
        snr: a.snr.unwrap_or(snr),
        missing: a.missing.unwrap_or(missing),
        seeds: a.seeds.unwrap_or(5),
        ps: a.p.clone().unwrap_or(ps),
        scales: a.lambda_scale.clone().unwrap_or(scales),
        inits: a.init_rank.clone().unwrap_or(inits),
        escapes,
    }
}

struct Cell {
    init: InitRank,
    p: f64,
    escape: Toggle,
    scale: Option<f64>,
    lambda: Option<f64>,
    train_frac: Option<f64>,
    range: std::ops::Range<usize>,
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let suite = a.suite.name();
    let (records, cells) = match a.suite {
        Suite::Table1 | Suite::Ptrend => run_synthetic_suite(a)?,
        Suite::Movielens => run_movielens_suite(a)?,
    };
    let mut summary: Vec<SummaryRow> = cells
        .iter()
        .map(|c| {
            let rows = &records[c.range.clone()];
            SummaryRow {
                suite,
                init_rank: init_label(c.init),
                p: c.p,
                escape: toggle_name(c.escape),
                lambda_scale: c.scale,
                lambda: c.lambda,
                train_frac: c.train_frac,
                runs: rows.len(),
                median_re: med(rows.iter().map(|r| r.re)),
                median_nmae: med(rows.iter().map(|r| r.nmae)),
                median_final_rank: med(rows.iter().map(|r| r.final_rank.map(|k| k as f64))),
                best: false,
            }
        })
        .collect();
    if a.suite == Suite::Ptrend {
        mark_best_per_p(&mut summary);
    }

    std::fs::create_dir_all(&a.out_dir)?;
    let csv_path = a.out_dir.join(format!("{suite}.csv"));
    record::write_csv_to(&records, Some(&csv_path))?;
    record::write_csv_to(&summary, Some(&a.out_dir.join(format!("{suite}_summary.csv"))))?;
    if a.json {
        record::write_json(&records, &a.out_dir.join(format!("{suite}.json")))?;
    }
    print_summary(a.suite, &summary);
    println!("{} runs written to {}", records.len(), csv_path.display());

    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(runtime(format!("{failed} of {} runs failed", records.len())));
    }
    Ok(())
}

fn run_synthetic_suite(a: &BenchArgs) -> Result<(Vec<RunRecord>, Vec<Cell>), CliError> {
    let g = synthetic_grid(a);
    let problems: Vec<(SynthSpec, Problem)> = (0..g.seeds)
        .map(|seed| {
            let spec = SynthSpec {
                m: g.m,
                n: g.n,
                rank: g.rank,
                snr_db: g.snr,
                missing_rate: g.missing,
                seed,
            };
            spec.validate().map_err(usage)?;
            if spec.snr_db.is_infinite() {
                return Err(usage("benchmark suites calibrate λ to the noise level and need a finite --snr"));
            }
            let gt = gen_synthetic(&spec).map_err(runtime)?;
            let problem = Problem {
                truth: Some((gt.x_true, complement_mask(&gt.y_obs))),
                train: gt.y_obs,
                ratings: None,
                true_rank: Some(g.rank),
                missing: Some(g.missing),
                snr_db: Some(g.snr),
            };
            Ok((spec, problem))
        })
        .collect::<Result<_, CliError>>()?;
    let mut jobs = Vec::new();
    let mut cells = Vec::new();
    for &p in &g.ps {
        let pe = PExponent::new(p).map_err(usage)?;
        for &init in &g.inits {
            let width = init.resolve(Some(g.rank)).map_err(usage)?;
            for &escape in &g.escapes {
                for &scale in &g.scales {
                    let start = jobs.len();
                    for (spec, problem) in &problems {
                        let (x, _) = problem.truth.as_ref().expect("synthetic problems carry ground truth");
                        let lambda = noise_calibrated_lambda(spec, x, problem.train.len(), scale, pe)
                            .expect("finite snr checked above");
                        let cfg = a.solver.config(p, lambda, width, escape, spec.seed)?;
                        jobs.push(Job {
                            suite: a.suite.name(),
                            problem,
                            cfg,
                        });
                    }
                    cells.push(Cell {
                        init,
                        p,
                        escape,
                        scale: Some(scale),
                        lambda: None,
                        train_frac: None,
                        range: start..jobs.len(),
                    });
                }
            }
        }
    }
    Ok((execute_all(&jobs, a.stable), cells))
}

fn run_movielens_suite(a: &BenchArgs) -> Result<(Vec<RunRecord>, Vec<Cell>), CliError> {
    let path = a.data.as_deref().ok_or_else(|| {
        usage(
            "the movielens suite needs the ratings file: pass --data <path/to/ml-100k/u.data> \
             (MovieLens 100K is available from https://grouplens.org/datasets/movielens/100k/)",
        )
    })?;
    let obs = load_ratings(path)?;
    let fracs = a.train_frac.clone().unwrap_or_else(|| vec![0.5, 0.25]);
    let ps = a.p.clone().unwrap_or_else(|| vec![0.5, 0.3]);
    let lambdas = a.lambda.clone().unwrap_or_else(|| vec![50.0, 100.0, 200.0]);
    let inits = a
        .init_rank
        .clone()
        .unwrap_or_else(|| vec![InitRank::Absolute(10), InitRank::Absolute(20), InitRank::Absolute(30)]);
    let seeds = a.seeds.unwrap_or(1);

    let mut problems = Vec::new();
    for &frac in &fracs {
        for seed in 0..seeds {
            let parts = split(&obs, frac, seed).map_err(usage)?;
            problems.push((frac, seed, ratings_problem(parts.train, parts.test, Some(&[1.0, 5.0]))?));
        }
    }
    let mut jobs = Vec::new();
    let mut cells = Vec::new();
    for &frac in &fracs {
        for &p in &ps {
            for &lambda in &lambdas {
                for &init in &inits {
                    let width = init.resolve(None).map_err(usage)?;
                    let start = jobs.len();
                    for (_, seed, problem) in problems.iter().filter(|x| x.0 == frac) {
                        let cfg = a.solver.config(p, lambda, width, Toggle::Off, *seed)?;
                        jobs.push(Job {
                            suite: "movielens",
                            problem,
                            cfg,
                        });
                    }
                    cells.push(Cell {
                        init,
                        p,
                        escape: Toggle::Off,
                        scale: None,
                        lambda: Some(lambda),
                        train_frac: Some(frac),
                        range: start..jobs.len(),
                    });
                }
            }
        }
    }
    Ok((execute_all(&jobs, a.stable), cells))
}

fn load_ratings(path: &Path) -> Result<spnorm_core::ObservedMatrix, CliError> {
    parse_movielens(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn mark_best_per_p(rows: &mut [SummaryRow]) {
    let mut ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    ps.dedup();
    for p in ps {
        let best = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.p == p && r.median_re.is_some())
            .min_by(|a, b| a.1.median_re.unwrap().total_cmp(&b.1.median_re.unwrap()))
            .map(|(k, _)| k);
        if let Some(k) = best {
            rows[k].best = true;
        }
    }
}

fn fmt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

fn print_summary(suite: Suite, rows: &[SummaryRow]) {
    match suite {
        Suite::Table1 => {
            let mut cols: Vec<(f64, &str)> = Vec::new();
            let mut inits: Vec<String> = Vec::new();
            for r in rows {
                if !cols.contains(&(r.p, r.escape)) {
                    cols.push((r.p, r.escape));
                }
                if !inits.contains(&r.init_rank) {
                    inits.push(r.init_rank.clone());
                }
            }
            let mut header = format!("{:<8}", "init");
            for (p, e) in &cols {
                header += &format!(" | {:>16}", format!("p={p} escape {e}"));
            }
            println!("median RE / median rank");
            println!("{header}");
            for init in &inits {
                let mut line = format!("{init:<8}");
                for (p, e) in &cols {
                    let cell = rows.iter().find(|r| &r.init_rank == init && r.p == *p && r.escape == *e);
                    let text = cell.map_or_else(
                        || "-".into(),
                        |r| format!("{} / {}", fmt(r.median_re, 4), fmt(r.median_final_rank, 0)),
                    );
                    line += &format!(" | {text:>16}");
                }
                println!("{line}");
            }
        }
        Suite::Ptrend => {
            println!("{:<6} {:>10} {:>10} {:>8}", "p", "best scale", "median RE", "rank");
            for r in rows.iter().filter(|r| r.best) {
                println!(
                    "{:<6} {:>10} {:>10} {:>8}",
                    r.p,
                    fmt(r.lambda_scale, 2),
                    fmt(r.median_re, 4),
                    fmt(r.median_final_rank, 0)
                );
            }
        }
        Suite::Movielens => {
            println!("{:<6} {:<6} {:>8} {:>6} {:>8} {:>6}", "train", "p", "lambda", "init", "NMAE", "rank");
            for r in rows {
                println!(
                    "{:<6} {:<6} {:>8} {:>6} {:>8} {:>6}",
                    fmt(r.train_frac, 2),
                    r.p,
                    fmt(r.lambda, 2),
                    r.init_rank,
                    fmt(r.median_nmae, 4),
                    fmt(r.median_final_rank, 0)
                );
            }
        }
    }
}
