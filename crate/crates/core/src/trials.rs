//! Single-run drivers and helpers shared by the command-line suites.

use std::time::Instant;

use crate::error::Result;
use crate::escape::acceptance_lambda;
use crate::experiments::{nmae, relative_error, GroundTruth, SynthSpec};
use crate::matrix::DenseMatrix;
use crate::observed::ObservedMatrix;
use crate::schatten::{Factors, PExponent};
use crate::solver::{solve, Init, SolveReport, SolverConfig};

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub factors: Factors,
    pub report: SolveReport,
    pub re: Option<f64>,
    pub nmae: Option<f64>,
    pub wall_ms: f64,
}

/// Solves on the observed part of `gt` and scores on its held-out entries.
pub fn run_synthetic(gt: &GroundTruth, cfg: &SolverConfig) -> Result<TrialOutcome> {
    let start = Instant::now();
    let (factors, report) = solve(&gt.y_obs, cfg, Init::Random)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let re = if gt.test_mask.is_empty() {
        None
    } else {
        Some(relative_error(&factors, &gt.x_true, &gt.test_mask)?)
    };
    Ok(TrialOutcome {
        factors,
        report,
        re,
        nmae: None,
        wall_ms,
    })
}

/// Solves on `train` and scores NMAE on `test` over `[r_min, r_max]`.
pub fn run_ratings(
    train: &ObservedMatrix,
    test: &ObservedMatrix,
    cfg: &SolverConfig,
    range: (f64, f64),
) -> Result<TrialOutcome> {
    let start = Instant::now();
    let (factors, report) = solve(train, cfg, Init::Random)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let score = nmae(&factors, test, range.0, range.1)?;
    Ok(TrialOutcome {
        factors,
        report,
        re: None,
        nmae: Some(score),
        wall_ms,
    })
}

/// Expected spectral norm of the zero-filled observed noise,
/// `σ·√(|Z|/mn)·(√m + √n)`.
pub fn observed_noise_level(noise_std: f64, m: usize, n: usize, observed: usize) -> f64 {
    let frac = observed as f64 / (m * n) as f64;
    noise_std * frac.sqrt() * ((m as f64).sqrt() + (n as f64).sqrt())
}

/// Noise standard deviation implied by a synthetic spec for a signal of the
/// given mean power. Zero when noise is disabled.
pub fn noise_std(spec: &SynthSpec, signal_power: f64) -> f64 {
    if spec.snr_db.is_infinite() {
        0.0
    } else {
        (signal_power / 10f64.powf(spec.snr_db / 10.0)).sqrt()
    }
}

/// The λ at which a residual of spectral norm `scale · level` sits exactly on
/// the escape acceptance boundary. Residual directions weaker than that are
/// neither added by escapes nor, roughly, retained by the regularizer.
pub fn lambda_for_level(level: f64, scale: f64, p: PExponent) -> f64 {
    acceptance_lambda(scale * level, p)
}

/// λ calibrated to the observed noise of a synthetic instance, or `None` when
/// the instance is noiseless.
pub fn calibrated_lambda(gt: &GroundTruth, scale: f64, p: PExponent) -> Option<f64> {
    noise_calibrated_lambda(&gt.spec, &gt.x_true, gt.y_obs.len(), scale, p)
}

/// [`calibrated_lambda`] from the generating spec, the clean matrix, and the
/// number of observed entries.
pub fn noise_calibrated_lambda(
    spec: &SynthSpec,
    x_true: &DenseMatrix,
    observed: usize,
    scale: f64,
    p: PExponent,
) -> Option<f64> {
    let (m, n) = x_true.shape();
    let power = x_true.frobenius_norm_sq() / (m * n) as f64;
    let level = observed_noise_level(noise_std(spec, power), m, n, observed);
    (level > 0.0).then(|| lambda_for_level(level, scale, p))
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn noise_level() {
        assert_eq!(observed_noise_level(1.0, 100, 100, 10_000), 20.0);
        let s = SynthSpec {
            m: 4,
            n: 4,
            rank: 1,
            snr_db: 10.0,
            missing_rate: 0.0,
            seed: 0,
        };
        assert!((noise_std(&s, 10.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_has_no_calibration() {
        let mut spec = SynthSpec {
            m: 12,
            n: 10,
            rank: 2,
            snr_db: f64::INFINITY,
            missing_rate: 0.3,
            seed: 1,
        };
        let p = PExponent::new(0.5).unwrap();
        let gt = crate::experiments::gen_synthetic(&spec).unwrap();
        assert_eq!(calibrated_lambda(&gt, 2.0, p), None);
        spec.snr_db = 10.0;
        let gt = crate::experiments::gen_synthetic(&spec).unwrap();
        let lam = calibrated_lambda(&gt, 2.0, p).unwrap();
        assert!(lam > 0.0 && lam.is_finite());
    }
}
