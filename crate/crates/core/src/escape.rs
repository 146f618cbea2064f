//! Rank-one escape from stationary points.
//!
//! At a stationary point with residual `R`, appending the column pair
//! `(τu, τv)` built from the top singular pair of the embedded residual
//! `A*(R)` changes the objective (for an isometric operator) by
//!
//! ```text
//! f(τ) = −τ²σ + ½τ⁴ + λτ^{2p}
//! ```
//!
//! For `0 < p < 1` the candidate scale is `τ² = μ = (2 − 2p)/(2 − p)·σ`, and the
//! step is taken when `λ − μ^{1−p}σ + ½μ^{2−p} ≤ 0`. For `p = 1` the nuclear
//! norm case applies: accept when `σ > λ` with `τ² = σ − λ`.
//!
//! Masked operators are not isometric, so every accepted step is re-evaluated
//! on the true objective and rolled back if it fails to descend.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::observed::{adjoint_embed, masked_residual, ObservedMatrix};
use crate::schatten::{Factors, PExponent};
use crate::solver::{objective, SolverConfig};
use crate::spectral::top_singular_pair;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 20_000;
/// Allowed excess of the realized objective change over the model prediction.
const VIOLATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeDecision {
    /// Spectral norm of the embedded residual.
    pub sigma: f64,
    /// Squared scale candidate. For `p = 1` this is `σ − λ` when accepted.
    pub mu: f64,
    pub tau: f64,
    /// Model objective change `f(τ)`; zero when rejected.
    pub descent_value: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EscapeStatus {
    Accepted,
    Rejected,
    /// The model predicted descent but the true objective did not follow.
    RolledBack { violation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeOutcome {
    pub decision: EscapeDecision,
    pub status: EscapeStatus,
    pub objective_before: f64,
    /// Objective with the column appended; equals `objective_before` when the
    /// decision was a rejection.
    pub objective_after: f64,
    /// `|‖A(uvᵀ)‖_F − 1|` for the chosen unit-norm direction.
    pub isometry_gap: f64,
}

/// `−τ²σ + ½τ⁴ + λτ^{2p}`
pub fn scale_objective(tau: f64, sigma: f64, lambda: f64, p: PExponent) -> f64 {
    let t2 = tau * tau;
    -t2 * sigma + 0.5 * t2 * t2 + lambda * crate::schatten::pow_p(t2, p.get())
}

/// Closed-form decision for a residual with spectral norm `sigma`.
pub fn decide(sigma: f64, lambda: f64, p: PExponent) -> EscapeDecision {
    let rejected = |mu: f64| EscapeDecision {
        sigma,
        mu,
        tau: 0.0,
        descent_value: 0.0,
        accepted: false,
    };
    if p.is_nuclear() {
        if sigma > lambda {
            let mu = sigma - lambda;
            return EscapeDecision {
                sigma,
                mu,
                tau: mu.sqrt(),
                descent_value: -0.5 * mu * mu,
                accepted: true,
            };
        }
        return rejected(0.0);
    }
    let pv = p.get();
    let mu = (2.0 - 2.0 * pv) / (2.0 - pv) * sigma;
    if mu <= 0.0 {
        return rejected(mu.max(0.0));
    }
    let test = lambda - mu.powf(1.0 - pv) * sigma + 0.5 * mu.powf(2.0 - pv);
    if test <= 0.0 {
        EscapeDecision {
            sigma,
            mu,
            tau: mu.sqrt(),
            descent_value: -mu * sigma + 0.5 * mu * mu + lambda * mu.powf(pv),
            accepted: true,
        }
    } else {
        rejected(mu)
    }
}

/// Largest `λ` for which a residual of spectral norm `sigma` still admits an
/// escape: `μ^{1−p}σ − ½μ^{2−p}` for `p < 1`, and `σ` for `p = 1`.
pub fn acceptance_lambda(sigma: f64, p: PExponent) -> f64 {
    if p.is_nuclear() {
        return sigma;
    }
    let pv = p.get();
    let mu = (2.0 - 2.0 * pv) / (2.0 - pv) * sigma;
    mu.powf(1.0 - pv) * sigma - 0.5 * mu.powf(2.0 - pv)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("escape requires lambda > 0, got {lambda}")))
    }
}

/// Decision for an explicit dense residual embedding `A*(R)`.
pub fn escape_decision(r_dense: &DenseMatrix, lambda: f64, p: PExponent) -> Result<EscapeDecision> {
    check_lambda(lambda)?;
    let top = top_singular_pair(r_dense, POWER_TOL, POWER_MAX_ITER)?;
    Ok(decide(top.triple.sigma, lambda, p))
}

/// Tries to append a balanced rank-one column pair to `f`.
///
/// The returned factors are `f` itself unless the step was accepted and
/// verified to lower the objective.
pub fn attempt(y: &ObservedMatrix, f: &Factors, cfg: &SolverConfig) -> Result<(Factors, EscapeOutcome)> {
    check_lambda(cfg.lambda)?;
    let residual = masked_residual(y, f)?;
    let dense = adjoint_embed(&residual);
    let top = top_singular_pair(&dense, POWER_TOL, POWER_MAX_ITER)?;
    let decision = decide(top.triple.sigma, cfg.lambda, cfg.p);
    let before = objective(y, f, cfg)?;

    let isometry_gap = {
        let (u, v) = (&top.triple.u, &top.triple.v);
        let masked_sq: f64 = y
            .observations()
            .iter()
            .map(|o| (u[o.row] * v[o.col]).powi(2))
            .sum();
        (masked_sq.sqrt() - 1.0).abs()
    };

    if !decision.accepted {
        return Ok((
            f.clone(),
            EscapeOutcome {
                decision,
                status: EscapeStatus::Rejected,
                objective_before: before,
                objective_after: before,
                isometry_gap,
            },
        ));
    }

    let tau = decision.tau;
    let u_col: Vec<f64> = top.triple.u.iter().map(|x| tau * x).collect();
    let v_col: Vec<f64> = top.triple.v.iter().map(|x| tau * x).collect();
    let candidate = f.push_column(&u_col, &v_col);
    let after = objective(y, &candidate, cfg)?;
    let realized = after - before;
    let violation = realized - decision.descent_value;

    let status = if realized < 0.0 && violation <= VIOLATION_TOL * before.abs().max(1.0) {
        EscapeStatus::Accepted
    } else {
        EscapeStatus::RolledBack { violation }
    };
    let outcome = EscapeOutcome {
        decision,
        status,
        objective_before: before,
        objective_after: after,
        isometry_gap,
    };
    if status == EscapeStatus::Accepted {
        Ok((candidate, outcome))
    } else {
        Ok((f.clone(), outcome))
    }
}
