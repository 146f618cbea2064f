use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use spnorm_core::experiments::{nmae, relative_error};
use spnorm_core::{solve, DenseMatrix, Init, ObservedMatrix, SolverConfig};

use crate::record::RunRecord;

/// Data a solver run is fitted to and scored against.
#[derive(Debug, Clone)]
pub struct Problem {
    pub train: ObservedMatrix,
    /// Ground truth and the held-out indices RE is measured on.
    pub truth: Option<(DenseMatrix, Vec<(usize, usize)>)>,
    /// Held-out ratings and the rating range NMAE is normalized by.
    pub ratings: Option<(ObservedMatrix, (f64, f64))>,
    pub true_rank: Option<usize>,
    pub missing: Option<f64>,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Job<'a> {
    pub suite: &'static str,
    pub problem: &'a Problem,
    pub cfg: SolverConfig,
}

/// Initial width, either absolute or a multiple of the true rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitRank {
    Absolute(usize),
    Multiple(f64),
}

impl InitRank {
    pub fn resolve(self, true_rank: Option<usize>) -> Result<usize, String> {
        match self {
            InitRank::Absolute(d) => Ok(d),
            InitRank::Multiple(k) => {
                let r = true_rank.ok_or("a rank multiple like `0.5x` needs a known true rank")?;
                Ok(((k * r as f64).round() as usize).max(1))
            }
        }
    }
}

impl FromStr for InitRank {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(k) = s.strip_suffix('x') {
            match k.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(InitRank::Multiple(v)),
                _ => Err(format!("invalid rank multiple {s:?}")),
            }
        } else {
            match s.parse::<usize>() {
                Ok(d) if d > 0 => Ok(InitRank::Absolute(d)),
                _ => Err(format!("invalid initial rank {s:?}")),
            }
        }
    }
}

pub fn execute(job: &Job, stable: bool) -> RunRecord {
    let (m, n) = job.problem.train.shape();
    let mut rec = RunRecord {
        suite: job.suite.to_string(),
        m,
        n,
        true_rank: job.problem.true_rank,
        missing: job.problem.missing,
        snr_db: job.problem.snr_db,
        p: job.cfg.p.get(),
        lambda: job.cfg.lambda,
        init_rank: job.cfg.init_width,
        escape: if job.cfg.escape_enabled { "on" } else { "off" },
        seed: job.cfg.seed,
        iters: None,
        escapes: None,
        final_rank: None,
        objective: None,
        re: None,
        nmae: None,
        wall_ms: None,
        error: None,
    };
    let start = Instant::now();
    let outcome = solve(&job.problem.train, &job.cfg, Init::Random).and_then(|(f, report)| {
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        let re = match &job.problem.truth {
            Some((x, mask)) if !mask.is_empty() => Some(relative_error(&f, x, mask)?),
            _ => None,
        };
        let score = match &job.problem.ratings {
            Some((test, range)) => Some(nmae(&f, test, range.0, range.1)?),
            None => None,
        };
        Ok((report, re, score, elapsed))
    });
    match outcome {
        Ok((report, re, score, elapsed)) => {
            rec.iters = Some(report.iters);
            rec.escapes = Some(report.escapes);
            rec.final_rank = Some(report.final_width);
            rec.objective = Some(report.final_objective());
            rec.re = re;
            rec.nmae = score;
            rec.wall_ms = (!stable).then_some(elapsed);
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Runs every job, in parallel, returning records in job order.
pub fn execute_all(jobs: &[Job], stable: bool) -> Vec<RunRecord> {
    jobs.par_iter().map(|j| execute(j, stable)).collect()
}
