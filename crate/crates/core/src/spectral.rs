//! Dense spectral kernels: a one-sided Jacobi SVD and power iteration for the
//! dominant singular triple.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, DenseMatrix};

const JACOBI_MAX_SWEEPS: usize = 80;
const POWER_SEED: u64 = 0x5eed_0f_d0_1a_17;

/// Thin singular value decomposition `X = U·diag(s)·Vᵀ` with `k = min(m, n)`
/// columns in `U` and `V` and `s` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    /// Number of singular values above `rel_tol · s[0]`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.s.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.s.iter().take_while(|&&x| x > rel_tol * top).count()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.u
            .scale_columns(&self.s)
            .matmul_t(&self.v)
            .expect("svd factors have consistent shapes")
    }
}

/// Leading singular triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTriple {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PowerIteration {
    pub triple: SpectralTriple,
    pub converged: bool,
    pub iterations: usize,
}

fn check_finite(x: &DenseMatrix) -> Result<()> {
    match x.as_slice().iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::NonFinite {
            row: k / x.cols().max(1),
            col: k % x.cols().max(1),
        }),
        None => Ok(()),
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
pub fn full_svd(x: &DenseMatrix) -> Result<Svd> {
    check_finite(x)?;
    if x.rows() < x.cols() {
        let t = full_svd(&x.transpose())?;
        let mut svd = Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
        fix_signs(&mut svd);
        return Ok(svd);
    }
    let (m, n) = x.shape();
    // Column-major working copy.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| x.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = w.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let top = order.first().map_or(0.0, |o| o.0);
    let floor = top * f64::EPSILON * (m as f64);
    let mut s = Vec::with_capacity(n);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for &(sigma, j) in &order {
        if sigma > floor && sigma > 0.0 {
            s.push(sigma);
            u_cols.push(w[j].iter().map(|x| x / sigma).collect());
        } else {
            s.push(0.0);
            missing.push(u_cols.len());
            u_cols.push(Vec::new());
        }
        v_cols.push(v[j].clone());
    }
    complete_orthonormal(&mut u_cols, &missing, m);

    let mut svd = Svd {
        u: DenseMatrix::from_columns(m, &u_cols),
        s,
        v: DenseMatrix::from_columns(n, &v_cols),
    };
    fix_signs(&mut svd);
    Ok(svd)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (a, b) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Fills the listed empty slots with unit vectors orthogonal to every other
/// column, by Gram–Schmidt on the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize], m: usize) {
    if missing.is_empty() {
        return;
    }
    let mut basis: Vec<Vec<f64>> = cols.iter().filter(|c| !c.is_empty()).cloned().collect();
    let mut next_e = 0;
    for &slot in missing {
        loop {
            assert!(next_e < m, "ran out of basis vectors during completion");
            let mut e = vec![0.0; m];
            e[next_e] = 1.0;
            next_e += 1;
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&e, b);
                    e.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let nrm = norm(&e);
            if nrm > 1e-6 {
                e.iter_mut().for_each(|x| *x /= nrm);
                basis.push(e.clone());
                cols[slot] = e;
                break;
            }
        }
    }
}

/// First non-negligible entry of every left singular vector is made positive.
fn fix_signs(svd: &mut Svd) {
    let (m, k) = svd.u.shape();
    for j in 0..k {
        let flip = (0..m)
            .map(|i| svd.u.get(i, j))
            .find(|x| x.abs() > 1e-12)
            .is_some_and(|x| x < 0.0);
        if flip {
            for i in 0..m {
                svd.u.set(i, j, -svd.u.get(i, j));
            }
            for i in 0..svd.v.rows() {
                svd.v.set(i, j, -svd.v.get(i, j));
            }
        }
    }
}

/// Dominant singular triple by alternating power iteration `u ∝ Xv`,
/// `v ∝ Xᵀu`, starting from a fixed seeded unit vector.
///
/// Stops once the change in σ, extrapolated geometrically over the remaining
/// iterations, falls below `tol · σ`.
pub fn top_singular_pair(x: &DenseMatrix, tol: f64, max_iter: usize) -> Result<PowerIteration> {
    check_finite(x)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let (m, n) = x.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v);
    let mut u = unit(m);

    let mut sigma = 0.0;
    let mut prev_delta = f64::INFINITY;
    for it in 1..=max_iter {
        let mut xu = x.mat_vec(&v);
        let a = norm(&xu);
        if a == 0.0 {
            return Ok(PowerIteration {
                triple: finish(0.0, unit(m), v),
                converged: true,
                iterations: it,
            });
        }
        xu.iter_mut().for_each(|e| *e /= a);
        u = xu;
        let mut xtv = x.t_mat_vec(&u);
        let next = norm(&xtv);
        xtv.iter_mut().for_each(|e| *e /= next);
        v = xtv;

        let delta = (next - sigma).abs();
        sigma = next;
        let rho = if prev_delta.is_finite() && prev_delta > 0.0 {
            delta / prev_delta
        } else {
            1.0
        };
        prev_delta = delta;
        let tail = if rho < 1.0 { delta * rho / (1.0 - rho) } else { f64::INFINITY };
        if it > 2 && delta <= tol * sigma && tail <= tol * sigma {
            return Ok(PowerIteration {
                triple: finish(sigma, u, v),
                converged: true,
                iterations: it,
            });
        }
        if delta == 0.0 && it > 1 {
            return Ok(PowerIteration {
                triple: finish(sigma, u, v),
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(PowerIteration {
        triple: finish(sigma, u, v),
        converged: false,
        iterations: max_iter,
    })
}

fn finish(sigma: f64, mut u: Vec<f64>, mut v: Vec<f64>) -> SpectralTriple {
    if u.iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0) {
        u.iter_mut().for_each(|x| *x = -*x);
        v.iter_mut().for_each(|x| *x = -*x);
    }
    SpectralTriple { sigma, u, v }
}

fn unit(n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    if n > 0 {
        e[0] = 1.0;
    }
    e
}

fn normalize(x: &mut [f64]) {
    let nrm = norm(x);
    if nrm > 0.0 {
        x.iter_mut().for_each(|e| *e /= nrm);
    }
}
