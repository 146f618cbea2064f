//! Block successive upper-bound minimization for
//!
//! ```text
//! L(U, V) = ½‖P_Z(Y − UVᵀ)‖_F² + λ Σᵢ cᵢ^p,   cᵢ = (‖uᵢ‖² + ‖vᵢ‖²) / 2
//! ```
//!
//! Each block update minimizes a quadratic majorizer whose row-wise curvature
//! is `H̃_U = VᵀV + λ·diag(p·cᵢ^{p−1})`. The majorizer is global: the masked
//! row Gram matrix is dominated by `VᵀV`, and `c ↦ c^p` is concave, so its
//! tangent line bounds it from above. Every step therefore descends.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::escape::{self, EscapeStatus};
use crate::matrix::{cholesky, cholesky_solve, DenseMatrix};
use crate::observed::ObservedMatrix;
use crate::schatten::{variational_sum, Factors, PExponent};

pub const DEFAULT_PRUNE_THRES: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_CONV_TOL: f64 = 1e-4;

/// Pivot floor, relative to the trace, below which a surrogate Hessian is
/// treated as singular.
const SINGULAR_REL: f64 = 1e-12;
const INIT_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub p: PExponent,
    pub lambda: f64,
    pub init_width: usize,
    pub prune_thres: f64,
    pub max_iter: usize,
    pub conv_tol: f64,
    pub escape_enabled: bool,
    /// Maximum number of successful rank-one escapes per solve.
    pub escape_check_max: usize,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(p: PExponent, lambda: f64, init_width: usize) -> Self {
        Self {
            p,
            lambda,
            init_width,
            prune_thres: DEFAULT_PRUNE_THRES,
            max_iter: DEFAULT_MAX_ITER,
            conv_tol: DEFAULT_CONV_TOL,
            escape_enabled: false,
            escape_check_max: init_width,
            seed: 0,
        }
    }

    pub fn with_escape(mut self, enabled: bool) -> Self {
        self.escape_enabled = enabled;
        self
    }

    pub fn with_escape_budget(mut self, budget: usize) -> Self {
        self.escape_check_max = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_conv_tol(mut self, tol: f64) -> Self {
        self.conv_tol = tol;
        self
    }

    pub fn with_prune_thres(mut self, thres: f64) -> Self {
        self.prune_thres = thres;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        if self.escape_enabled && self.lambda == 0.0 {
            return bad("rank-one escapes require lambda > 0".into());
        }
        if self.init_width == 0 {
            return bad("initial width must be at least 1".into());
        }
        if !(self.prune_thres > 0.0) || !(self.conv_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }
}

/// A rank-one escape that was committed during a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeEvent {
    /// Number of completed BSUM iterations when the escape fired.
    pub iter: usize,
    pub sigma: f64,
    pub tau: f64,
    /// Index of the post-escape entry in the objective trace.
    pub trace_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Number of surviving columns (0 when everything was pruned).
    pub final_width: usize,
    /// Objective after initialization, after each iteration, and after each
    /// committed escape.
    pub objective_trace: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    pub escapes: usize,
    pub escape_events: Vec<EscapeEvent>,
    /// Escape attempts that were rejected or rolled back.
    pub declined_escapes: usize,
}

impl SolveReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// Starting point for [`solve`].
#[derive(Debug, Clone)]
pub enum Init {
    /// Seeded Gaussian factors of width `init_width`.
    Random,
    Given(Factors),
}

/// Result of [`prune`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub factors: Factors,
    /// Every column fell below the threshold; `factors` holds one zero column.
    pub emptied: bool,
    pub removed: usize,
}

fn regularizer_weights(f: &Factors, p: PExponent) -> Result<Vec<f64>> {
    let pv = p.get();
    f.column_energies()
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            if c > 0.0 {
                Ok(pv * c.powf(pv - 1.0))
            } else {
                Err(Error::ZeroColumn(i))
            }
        })
        .collect()
}

/// `½‖P_Z(Y − UVᵀ)‖² + λ·Σ cᵢ^p`
pub fn objective(y: &ObservedMatrix, f: &Factors, cfg: &SolverConfig) -> Result<f64> {
    let loss = crate::observed::loss_value(y, f)?;
    Ok(loss + cfg.lambda * variational_sum(f, cfg.p))
}

/// Which factor a gradient or Hessian refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    U,
    V,
}

fn block_gradient(
    y: &ObservedMatrix,
    f: &Factors,
    residual: &[f64],
    weights: &[f64],
    lambda: f64,
    block: Block,
) -> DenseMatrix {
    let (own, other) = match block {
        Block::U => (f.u(), f.v()),
        Block::V => (f.v(), f.u()),
    };
    let d = f.width();
    let mut g = DenseMatrix::zeros(own.rows(), d);
    for (o, &r) in y.observations().iter().zip(residual) {
        let (i, j) = match block {
            Block::U => (o.row, o.col),
            Block::V => (o.col, o.row),
        };
        let src = other.row(j);
        for (gk, &sk) in g.row_mut(i).iter_mut().zip(src) {
            *gk -= r * sk;
        }
    }
    if lambda != 0.0 {
        for i in 0..own.rows() {
            let src = own.row(i);
            for ((gk, &xk), &wk) in g.row_mut(i).iter_mut().zip(src).zip(weights) {
                *gk += lambda * wk * xk;
            }
        }
    }
    g
}

fn gradient(y: &ObservedMatrix, f: &Factors, cfg: &SolverConfig, block: Block) -> Result<DenseMatrix> {
    y.check_factors(f)?;
    let weights = regularizer_weights(f, cfg.p)?;
    let residual = y.residual_values(f);
    Ok(block_gradient(y, f, &residual, &weights, cfg.lambda, block))
}

/// `∇_U L = −A*(R)·V + λ·U·W`
pub fn grad_u(y: &ObservedMatrix, f: &Factors, cfg: &SolverConfig) -> Result<DenseMatrix> {
    gradient(y, f, cfg, Block::U)
}

/// `∇_V L = −A*(R)ᵀ·U + λ·V·W`
pub fn grad_v(y: &ObservedMatrix, f: &Factors, cfg: &SolverConfig) -> Result<DenseMatrix> {
    gradient(y, f, cfg, Block::V)
}

fn block_hessian(other: &DenseMatrix, weights: &[f64], lambda: f64) -> DenseMatrix {
    let mut h = other.gram();
    for (k, &w) in weights.iter().enumerate() {
        h.set(k, k, h.get(k, k) + lambda * w);
    }
    h
}

fn factorize(h: &DenseMatrix) -> Result<Vec<f64>> {
    let trace: f64 = (0..h.rows()).map(|k| h.get(k, k)).sum();
    let threshold = SINGULAR_REL * trace.max(f64::MIN_POSITIVE);
    cholesky(h, threshold).map_err(|pivot| Error::SingularHessian { pivot, threshold })
}

fn checked_hessian(f: &Factors, cfg: &SolverConfig, block: Block) -> Result<DenseMatrix> {
    let weights = regularizer_weights(f, cfg.p)?;
    let other = match block {
        Block::U => f.v(),
        Block::V => f.u(),
    };
    let h = block_hessian(other, &weights, cfg.lambda);
    factorize(&h)?;
    Ok(h)
}

/// `H̃_U = VᵀV + λ·diag(p·cᵢ^{p−1})`
pub fn surrogate_hessian_u(f: &Factors, cfg: &SolverConfig) -> Result<DenseMatrix> {
    checked_hessian(f, cfg, Block::U)
}

/// `H̃_V = UᵀU + λ·diag(p·cᵢ^{p−1})`
pub fn surrogate_hessian_v(f: &Factors, cfg: &SolverConfig) -> Result<DenseMatrix> {
    checked_hessian(f, cfg, Block::V)
}

/// Minimizes the block majorizer: every row moves to `x − H̃⁻¹·g`.
fn block_update(y: &ObservedMatrix, f: &Factors, cfg: &SolverConfig, block: Block) -> Result<Factors> {
    let weights = regularizer_weights(f, cfg.p)?;
    let residual = y.residual_values(f);
    let g = block_gradient(y, f, &residual, &weights, cfg.lambda, block);
    let (own, other) = match block {
        Block::U => (f.u(), f.v()),
        Block::V => (f.v(), f.u()),
    };
    let d = f.width();
    let chol = factorize(&block_hessian(other, &weights, cfg.lambda))?;
    let mut next = own.clone();
    let mut step = vec![0.0; d];
    for i in 0..own.rows() {
        step.copy_from_slice(g.row(i));
        cholesky_solve(&chol, d, &mut step);
        for (x, s) in next.row_mut(i).iter_mut().zip(&step) {
            *x -= s;
        }
    }
    match block {
        Block::U => Factors::new(next, f.v().clone()),
        Block::V => Factors::new(f.u().clone(), next),
    }
}

/// One Gauss–Seidel sweep: update `U` against `V`, then `V` against the new `U`.
pub fn bsum_step(y: &ObservedMatrix, f: &Factors, cfg: &SolverConfig) -> Result<Factors> {
    y.check_factors(f)?;
    let half = block_update(y, f, cfg, Block::U)?;
    block_update(y, &half, cfg, Block::V)
}

/// Deletes every column with `‖uᵢ‖ ≤ thres` or `‖vᵢ‖ ≤ thres`.
pub fn prune(f: &Factors, thres: f64) -> Pruned {
    let keep: Vec<usize> = f
        .u_norms()
        .iter()
        .zip(f.v_norms())
        .enumerate()
        .filter(|(_, (&a, b))| a > thres && *b > thres)
        .map(|(i, _)| i)
        .collect();
    let removed = f.width() - keep.len();
    if keep.is_empty() {
        let (m, n) = f.shape();
        return Pruned {
            factors: Factors::zeros(m, n, 1),
            emptied: true,
            removed,
        };
    }
    let factors = if removed == 0 {
        f.clone()
    } else {
        f.select_columns(&keep).expect("non-empty selection")
    };
    Pruned {
        factors,
        emptied: false,
        removed,
    }
}

/// `‖U₁V₁ᵀ − U₀V₀ᵀ‖_F` for factor pairs of equal width, computed from small
/// Gram matrices so no `m×n` product is formed.
fn product_change(before: &Factors, after: &Factors) -> f64 {
    let du = after.u().sub(before.u()).expect("same width");
    let dv = after.v().sub(before.v()).expect("same width");
    // U₁V₁ᵀ − U₀V₀ᵀ = ΔU·V₁ᵀ + U₀·ΔVᵀ = [ΔU U₀]·[V₁ ΔV]ᵀ
    let (m, n) = before.shape();
    let d = before.width();
    let p = DenseMatrix::from_fn(m, 2 * d, |i, k| if k < d { du.get(i, k) } else { before.u().get(i, k - d) });
    let q = DenseMatrix::from_fn(n, 2 * d, |i, k| if k < d { after.v().get(i, k) } else { dv.get(i, k - d) });
    p.gram().inner(&q.gram()).max(0.0).sqrt()
}

fn product_norm(f: &Factors) -> f64 {
    f.u().gram().inner(&f.v().gram()).max(0.0).sqrt()
}

fn random_init(y: &ObservedMatrix, cfg: &SolverConfig) -> Factors {
    let (m, n) = y.shape();
    let d = cfg.init_width;
    // Scale so that ‖U₀V₀ᵀ‖_F matches the observed energy extrapolated to the
    // full matrix: E‖UVᵀ‖² = m·n·d·a⁴.
    let target = y.frobenius_norm() * ((m * n) as f64 / y.len() as f64).sqrt();
    let a = (target * target / (m * n * d) as f64).sqrt().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    let u = DenseMatrix::from_fn(m, d, |_, _| a * crate::experiments::standard_normal(&mut rng));
    let v = DenseMatrix::from_fn(n, d, |_, _| a * crate::experiments::standard_normal(&mut rng));
    Factors::new(u, v).expect("width >= 1")
}

/// Runs the BSUM iteration with column pruning and, when enabled, rank-one
/// escapes each time the iterates stall.
pub fn solve(y: &ObservedMatrix, cfg: &SolverConfig, init: Init) -> Result<(Factors, SolveReport)> {
    cfg.validate()?;
    if y.is_empty() {
        return Err(Error::NoObservations);
    }
    let start = match init {
        Init::Random => random_init(y, cfg),
        Init::Given(f) => {
            y.check_factors(&f)?;
            if f.width() != cfg.init_width {
                return Err(Error::ShapeMismatch(format!(
                    "initial factors have width {}, config says {}",
                    f.width(),
                    cfg.init_width
                )));
            }
            f
        }
    };

    let initial = prune(&start, cfg.prune_thres);
    let mut f = initial.factors;
    let mut emptied = initial.emptied;
    let mut trace = vec![objective(y, &f, cfg)?];
    let mut events = Vec::new();
    let mut declined = 0;
    let mut iters = 0;
    let mut converged = false;

    loop {
        let stalled = if emptied {
            true
        } else {
            if iters >= cfg.max_iter {
                break;
            }
            let next = bsum_step(y, &f, cfg)?;
            let denom = product_norm(&f);
            let change = product_change(&f, &next) / if denom > 0.0 { denom } else { 1.0 };
            let pruned = prune(&next, cfg.prune_thres);
            iters += 1;
            f = pruned.factors;
            emptied = pruned.emptied;
            trace.push(objective(y, &f, cfg)?);
            change < cfg.conv_tol || emptied
        };
        if !stalled {
            continue;
        }
        if !(cfg.escape_enabled && events.len() < cfg.escape_check_max) {
            converged = true;
            break;
        }
        let (candidate, outcome) = escape::attempt(y, &f, cfg)?;
        if outcome.status != EscapeStatus::Accepted {
            declined += 1;
            converged = true;
            break;
        }
        let repruned = prune(&candidate, cfg.prune_thres);
        f = repruned.factors;
        emptied = repruned.emptied;
        trace.push(objective(y, &f, cfg)?);
        events.push(EscapeEvent {
            iter: iters,
            sigma: outcome.decision.sigma,
            tau: outcome.decision.tau,
            trace_index: trace.len() - 1,
        });
        if emptied {
            // Cannot happen for an accepted escape with τ > thres; stop rather than loop.
            converged = true;
            break;
        }
    }

    let report = SolveReport {
        final_width: if emptied { 0 } else { f.width() },
        objective_trace: trace,
        iters,
        converged,
        escapes: events.len(),
        escape_events: events,
        declined_escapes: declined,
    };
    Ok((f, report))
}
