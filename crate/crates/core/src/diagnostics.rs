//! Optimality certificates: factorized stationarity, regular-subgradient
//! membership of the Schatten-p power, and the variational equality gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::observed::{adjoint_embed, masked_residual, ObservedMatrix};
use crate::schatten::{schatten_p_power, variational_sum, Factors, PExponent, RANK_REL_TOL};
use crate::solver::{grad_u, grad_v, SolverConfig};
use crate::spectral::full_svd;

pub const DEFAULT_SUBGRADIENT_TOL: f64 = 1e-6;

/// Singular values closer than this (relative to `σ₁`) form one cluster.
const CLUSTER_REL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub grad_norm_u: f64,
    pub grad_norm_v: f64,
    /// Filled by [`stationarity_report`]; `None` from [`factorized_stationarity`].
    pub x_space_diag_residual: Option<f64>,
    pub offdiag_residual: Option<f64>,
    pub width: usize,
}

/// Gradient norms scaled by `max(1, ‖factor‖_F)`.
pub fn factorized_stationarity(
    y: &ObservedMatrix,
    f: &Factors,
    cfg: &SolverConfig,
) -> Result<StationarityReport> {
    let gu = grad_u(y, f, cfg)?;
    let gv = grad_v(y, f, cfg)?;
    Ok(StationarityReport {
        grad_norm_u: gu.frobenius_norm() / f.u().frobenius_norm().max(1.0),
        grad_norm_v: gv.frobenius_norm() / f.v().frobenius_norm().max(1.0),
        x_space_diag_residual: None,
        offdiag_residual: None,
        width: f.width(),
    })
}

/// Factorized stationarity plus the X-space check of `A*(R)/λ` against the
/// regular subdifferential of `‖·‖_Sp^p` at `UVᵀ`.
pub fn stationarity_report(
    y: &ObservedMatrix,
    f: &Factors,
    cfg: &SolverConfig,
) -> Result<StationarityReport> {
    let mut report = factorized_stationarity(y, f, cfg)?;
    let x = f.product();
    if cfg.lambda > 0.0 && !x.is_zero() {
        let g = adjoint_embed(&masked_residual(y, f)?).scale(1.0 / cfg.lambda);
        let check = x_space_subgradient_check(&x, &g, cfg.p, DEFAULT_SUBGRADIENT_TOL)?;
        report.x_space_diag_residual = Some(check.diag_residual);
        report.offdiag_residual = Some(check.offdiag_residual);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgradientCheck {
    pub member: bool,
    /// Max deviation of `diag(UᵀGV)` from `p·σᵢ^{p−1}`.
    pub diag_residual: f64,
    /// Frobenius norm of the off-diagonal core entries (outside equal-σ
    /// clusters) together with the two mixed blocks.
    pub offdiag_residual: f64,
    /// Tolerance actually applied, `tol · max(1, ‖UᵀGV‖_F)`.
    pub tolerance: f64,
}

/// Tests `G ∈ U·diag(p·σ₊^{p−1})·Vᵀ + W` with `UᵀW = 0`, `WV = 0`, where
/// `X = UΣVᵀ` is the compact SVD. The block of `G` on both orthogonal
/// complements is left unconstrained.
pub fn x_space_subgradient_check(
    x: &DenseMatrix,
    g: &DenseMatrix,
    p: PExponent,
    tol: f64,
) -> Result<SubgradientCheck> {
    if x.shape() != g.shape() {
        return Err(Error::ShapeMismatch(format!(
            "X is {}x{}, G is {}x{}",
            x.rows(),
            x.cols(),
            g.rows(),
            g.cols()
        )));
    }
    let svd = full_svd(x)?;
    let r = svd.rank(RANK_REL_TOL);
    if r == 0 {
        return Err(Error::InvalidArgument("subgradient check needs X ≠ 0".into()));
    }
    let keep: Vec<usize> = (0..r).collect();
    let u = svd.u.select_columns(&keep);
    let v = svd.v.select_columns(&keep);
    let s = &svd.s[..r];

    let gv = g.matmul(&v)?; // m×r
    let core = u.t_matmul(&gv)?; // r×r
    let ug = u.t_matmul(g)?; // r×n

    let pv = p.get();
    let mut diag_residual: f64 = 0.0;
    let mut off_sq = 0.0;
    for i in 0..r {
        for j in 0..r {
            let c = core.get(i, j);
            if i == j {
                diag_residual = diag_residual.max((c - pv * s[i].powf(pv - 1.0)).abs());
            } else if (s[i] - s[j]).abs() > CLUSTER_REL * s[0] {
                off_sq += c * c;
            }
        }
    }
    // Uᵀ G (I − VVᵀ) and (I − UUᵀ) G V
    let row_part = ug.sub(&core.matmul_t(&v)?)?;
    let col_part = gv.sub(&u.matmul(&core)?)?;
    off_sq += row_part.frobenius_norm_sq() + col_part.frobenius_norm_sq();
    let offdiag_residual = off_sq.sqrt();

    let tolerance = tol * core.frobenius_norm().max(1.0);
    Ok(SubgradientCheck {
        member: diag_residual <= tolerance && offdiag_residual <= tolerance,
        diag_residual,
        offdiag_residual,
        tolerance,
    })
}

/// `variational_sum(F) − ‖UVᵀ‖_Sp^p`, non-negative up to rounding and zero
/// exactly at Schatten-attaining factorizations.
pub fn variational_gap(f: &Factors, p: PExponent) -> Result<f64> {
    Ok(variational_sum(f, p) - schatten_p_power(&f.product(), p)?)
}
