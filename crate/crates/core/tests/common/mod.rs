//! Independent reference implementations used by the integration tests and
//! the acceptance suite. Nothing here calls into the solver internals.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spnorm_core::{DenseMatrix, Factors, ObservedMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        scale * z
    })
}

pub fn random_factors(rng: &mut ChaCha8Rng, m: usize, n: usize, d: usize, scale: f64) -> Factors {
    Factors::new(gaussian(rng, m, d, scale), gaussian(rng, n, d, scale)).unwrap()
}

/// Keeps each entry of `x` with probability `frac`, always retaining at least
/// one entry.
pub fn random_mask(rng: &mut ChaCha8Rng, x: &DenseMatrix, frac: f64) -> ObservedMatrix {
    let mut t = Vec::new();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            if rng.random::<f64>() < frac {
                t.push((i, j, x.get(i, j)));
            }
        }
    }
    if t.is_empty() {
        t.push((0, 0, x.get(0, 0)));
    }
    ObservedMatrix::new(x.rows(), x.cols(), t).unwrap()
}

pub fn masked_gaussian(rng: &mut ChaCha8Rng, m: usize, n: usize, scale: f64, frac: f64) -> ObservedMatrix {
    let x = gaussian(rng, m, n, scale);
    random_mask(rng, &x, frac)
}

pub fn to_na(x: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice())
}

pub fn from_na(x: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
}

/// Singular values by eigen-decomposition of `XᵀX`, descending.
pub fn reference_singular_values(x: &DenseMatrix) -> Vec<f64> {
    let a = to_na(x);
    let small = if a.nrows() >= a.ncols() { a.transpose() * &a } else { &a * a.transpose() };
    let mut ev: Vec<f64> = small
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn min_eigenvalue(x: &DenseMatrix) -> f64 {
    to_na(x).symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Random `k×k` orthogonal matrix from the QR of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let g = to_na(&gaussian(rng, k, k, 1.0));
    g.qr().q()
}

/// Straightforward evaluation of the factorized objective from its definition.
pub fn reference_objective(y: &ObservedMatrix, u: &DenseMatrix, v: &DenseMatrix, lambda: f64, p: f64) -> f64 {
    let mut loss = 0.0;
    for o in y.observations() {
        let mut pred = 0.0;
        for k in 0..u.cols() {
            pred += u.get(o.row, k) * v.get(o.col, k);
        }
        loss += 0.5 * (o.value - pred).powi(2);
    }
    let mut reg = 0.0;
    for k in 0..u.cols() {
        let c = 0.5 * (u.column(k).iter().map(|a| a * a).sum::<f64>() + v.column(k).iter().map(|a| a * a).sum::<f64>());
        if c > 0.0 {
            reg += c.powf(p);
        }
    }
    loss + lambda * reg
}

/// Central-difference gradient of `f` with respect to every entry of `x`.
pub fn central_difference(x: &DenseMatrix, h: f64, f: impl Fn(&DenseMatrix) -> f64) -> DenseMatrix {
    let mut data = x.as_slice().to_vec();
    let mut out = vec![0.0; data.len()];
    for k in 0..data.len() {
        let orig = data[k];
        data[k] = orig + h;
        let plus = f(&DenseMatrix::new(x.rows(), x.cols(), data.clone()).unwrap());
        data[k] = orig - h;
        let minus = f(&DenseMatrix::new(x.rows(), x.cols(), data.clone()).unwrap());
        data[k] = orig;
        out[k] = (plus - minus) / (2.0 * h);
    }
    DenseMatrix::new(x.rows(), x.cols(), out).unwrap()
}

/// Minimizer and minimum of `t ↦ ½(t − σ)² + λ t^p` over `t ≥ 0`, by grid
/// search followed by golden-section refinement.
pub fn scalar_prox(sigma: f64, lambda: f64, p: f64) -> (f64, f64) {
    let h = |t: f64| 0.5 * (t - sigma).powi(2) + if t > 0.0 { lambda * t.powf(p) } else { 0.0 };
    let steps = 20_000;
    let hi = sigma.max(0.0);
    let mut best = (0.0, h(0.0));
    for k in 1..=steps {
        let t = hi * k as f64 / steps as f64;
        let v = h(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let dt = hi / steps as f64;
    let (mut a, mut b) = ((best.0 - dt).max(0.0), best.0 + dt);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if h(c) < h(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let t = 0.5 * (a + b);
    if h(t) < best.1 {
        (t, h(t))
    } else {
        best
    }
}

/// Global minimum of `½‖Y − X‖² + λ‖X‖_Sp^p` for a fully observed `Y` via
/// its singular values (the minimizer shares Y's singular vectors).
pub fn spectral_oracle(y: &DenseMatrix, lambda: f64, p: f64) -> f64 {
    reference_singular_values(y).iter().map(|&s| scalar_prox(s, lambda, p).1).sum()
}

/// Multi-start minimization of the factorized objective for a small fully
/// observed problem: `restarts` random starts, each polished by gradient
/// descent with backtracking.
pub fn factor_space_oracle(y: &DenseMatrix, d: usize, lambda: f64, p: f64, restarts: usize, seed: u64) -> f64 {
    let (m, n) = y.shape();
    let obs = ObservedMatrix::fully_observed(y);
    let mut rng = rng(seed);
    let scale = (y.frobenius_norm() / d as f64).sqrt().max(0.1);
    let mut best = reference_objective(&obs, &DenseMatrix::zeros(m, d), &DenseMatrix::zeros(n, d), lambda, p);
    for _ in 0..restarts {
        let mut u = gaussian(&mut rng, m, d, scale);
        let mut v = gaussian(&mut rng, n, d, scale);
        let mut f = reference_objective(&obs, &u, &v, lambda, p);
        let mut step = 0.1;
        for _ in 0..3000 {
            let (gu, gv) = reference_gradients(y, &u, &v, lambda, p);
            let gnorm = gu.frobenius_norm_sq() + gv.frobenius_norm_sq();
            if gnorm < 1e-24 {
                break;
            }
            let mut accepted = false;
            for _ in 0..60 {
                let nu = u.sub(&gu.scale(step)).unwrap();
                let nv = v.sub(&gv.scale(step)).unwrap();
                let nf = reference_objective(&obs, &nu, &nv, lambda, p);
                if nf <= f - 1e-4 * step * gnorm {
                    u = nu;
                    v = nv;
                    f = nf;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        best = best.min(f);
    }
    best
}

/// Gradients of the dense objective; columns with zero energy contribute no
/// regularizer gradient.
fn reference_gradients(y: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix, lambda: f64, p: f64) -> (DenseMatrix, DenseMatrix) {
    let r = y.sub(&u.matmul_t(v).unwrap()).unwrap();
    let d = u.cols();
    let w: Vec<f64> = (0..d)
        .map(|k| {
            let c = 0.5 * (u.column(k).iter().map(|a| a * a).sum::<f64>() + v.column(k).iter().map(|a| a * a).sum::<f64>());
            if c > 1e-300 {
                p * c.powf(p - 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let gu = u.scale_columns(&w).scale(lambda).sub(&r.matmul(v).unwrap()).unwrap();
    let gv = v.scale_columns(&w).scale(lambda).sub(&r.t_matmul(u).unwrap()).unwrap();
    (gu, gv)
}

/// Grid search of the rank-one scale model on `[0, 6·max(1, √σ)]` with step
/// 1e-4. Returns the minimizer of `g(τ) = λ − τ^{2−2p}σ + ½τ^{4−2p}` and the
/// minimum of `f(τ) = −τ²σ + ½τ⁴ + λτ^{2p}`.
pub fn tau_grid(sigma: f64, lambda: f64, p: f64) -> (f64, f64) {
    let hi = 3.0 * sigma.sqrt().max(1.0) * 2.0;
    let steps = (hi / 1e-4).round() as usize;
    let mut g_best = (0.0, f64::INFINITY);
    let mut f_min = 0.0f64;
    for k in 0..=steps {
        let tau = k as f64 * 1e-4;
        let t2 = tau * tau;
        let g = lambda - tau.powf(2.0 - 2.0 * p) * sigma + 0.5 * tau.powf(4.0 - 2.0 * p);
        if g < g_best.1 {
            g_best = (tau, g);
        }
        let f = -t2 * sigma + 0.5 * t2 * t2 + if tau > 0.0 { lambda * t2.powf(p) } else { 0.0 };
        f_min = f_min.min(f);
    }
    (g_best.0, f_min)
}

/// `U·diag(s)·Vᵀ` with orthonormal `U` (m×r) and `V` (n×r) drawn at random,
/// together with orthonormal completions of both.
pub struct Constructed {
    pub x: DenseMatrix,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub u_perp: DMatrix<f64>,
    pub v_perp: DMatrix<f64>,
    pub s: Vec<f64>,
}

pub fn construct_svd(rng: &mut ChaCha8Rng, m: usize, n: usize, s: &[f64]) -> Constructed {
    let r = s.len();
    let qu = random_orthogonal(rng, m);
    let qv = random_orthogonal(rng, n);
    let u = qu.columns(0, r).into_owned();
    let v = qv.columns(0, r).into_owned();
    let u_perp = qu.columns(r, m - r).into_owned();
    let v_perp = qv.columns(r, n - r).into_owned();
    let x = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(s)) * v.transpose();
    Constructed {
        x: from_na(&x),
        u,
        v,
        u_perp,
        v_perp,
        s: s.to_vec(),
    }
}

impl Constructed {
    /// `U·diag(p·sᵢ^{p−1})·Vᵀ`
    pub fn canonical(&self, p: f64) -> DMatrix<f64> {
        let d: Vec<f64> = self.s.iter().map(|s| p * s.powf(p - 1.0)).collect();
        &self.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)) * self.v.transpose()
    }
}
