//! The Schatten-p quasi-norm and its column-decoupled variational forms.
//!
//! For `X = U·Vᵀ` with columns `(uᵢ, vᵢ)` and `0 < p ≤ 1`:
//!
//! ```text
//! Σ σᵢ(X)^p  ≤  Σ ‖uᵢ‖^p ‖vᵢ‖^p  ≤  Σ ((‖uᵢ‖² + ‖vᵢ‖²) / 2)^p
//! ```
//!
//! with equality throughout at the balanced factorization
//! `U = U_X Σ^{1/2}`, `V = V_X Σ^{1/2}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::spectral::full_svd;

/// Singular values below this fraction of `σ₁` count as exact zeros.
pub const RANK_REL_TOL: f64 = 1e-12;

/// Exponent `p ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PExponent(f64);

impl PExponent {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p <= 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidArgument(format!("p must lie in (0, 1], got {p}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_nuclear(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for PExponent {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<PExponent> for f64 {
    fn from(p: PExponent) -> f64 {
        p.0
    }
}

/// `x^p` with the convention `0^p = 0`.
#[inline]
pub(crate) fn pow_p(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

/// A factor pair `(U: m×d, V: n×d)` representing `X = U·Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factors {
    u: DenseMatrix,
    v: DenseMatrix,
}

impl Factors {
    pub fn new(u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        if u.cols() != v.cols() {
            return Err(Error::ShapeMismatch(format!(
                "factor widths differ: U has {} columns, V has {}",
                u.cols(),
                v.cols()
            )));
        }
        if u.cols() == 0 {
            return Err(Error::InvalidArgument("factor width must be at least 1".into()));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(m: usize, n: usize, d: usize) -> Self {
        Self {
            u: DenseMatrix::zeros(m, d.max(1)),
            v: DenseMatrix::zeros(n, d.max(1)),
        }
    }

    #[inline]
    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn into_parts(self) -> (DenseMatrix, DenseMatrix) {
        (self.u, self.v)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.u.cols()
    }

    /// `(m, n)` of the represented matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }

    /// `U·Vᵀ`
    pub fn product(&self) -> DenseMatrix {
        self.u.matmul_t(&self.v).expect("factor widths agree")
    }

    pub fn u_norms(&self) -> Vec<f64> {
        self.u.column_norms()
    }

    pub fn v_norms(&self) -> Vec<f64> {
        self.v.column_norms()
    }

    /// Per-column `cᵢ = (‖uᵢ‖² + ‖vᵢ‖²) / 2`.
    pub fn column_energies(&self) -> Vec<f64> {
        self.u_norms()
            .iter()
            .zip(self.v_norms())
            .map(|(a, b)| 0.5 * (a * a + b * b))
            .collect()
    }

    pub fn select_columns(&self, keep: &[usize]) -> Result<Self> {
        Self::new(self.u.select_columns(keep), self.v.select_columns(keep))
    }

    pub fn push_column(&self, u_col: &[f64], v_col: &[f64]) -> Self {
        Self {
            u: self.u.push_column(u_col),
            v: self.v.push_column(v_col),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.u.is_zero() || self.v.is_zero()
    }
}

/// `Σ σᵢ(X)^p` over the numerically positive singular values.
pub fn schatten_p_power(x: &DenseMatrix, p: PExponent) -> Result<f64> {
    let svd = full_svd(x)?;
    let r = svd.rank(RANK_REL_TOL);
    Ok(svd.s[..r].iter().map(|&s| s.powf(p.get())).sum())
}

/// `Σᵢ ‖uᵢ‖^p ‖vᵢ‖^p`
pub fn variational_product(f: &Factors, p: PExponent) -> f64 {
    f.u_norms()
        .iter()
        .zip(f.v_norms())
        .map(|(a, b)| pow_p(a * b, p.get()))
        .sum()
}

/// `Σᵢ ((‖uᵢ‖² + ‖vᵢ‖²) / 2)^p`
pub fn variational_sum(f: &Factors, p: PExponent) -> f64 {
    f.column_energies()
        .into_iter()
        .map(|c| pow_p(c, p.get()))
        .sum()
}

/// `U = U_X Σ^{1/2}`, `V = V_X Σ^{1/2}` padded with zero columns to width `d`.
pub fn balanced_factorization(x: &DenseMatrix, d: usize) -> Result<Factors> {
    let svd = full_svd(x)?;
    let rank = svd.rank(RANK_REL_TOL);
    if d < rank || d == 0 {
        return Err(Error::WidthBelowRank { width: d, rank });
    }
    let (m, n) = x.shape();
    let roots: Vec<f64> = svd.s[..rank].iter().map(|s| s.sqrt()).collect();
    let u = DenseMatrix::from_fn(m, d, |i, j| if j < rank { svd.u.get(i, j) * roots[j] } else { 0.0 });
    let v = DenseMatrix::from_fn(n, d, |i, j| if j < rank { svd.v.get(i, j) * roots[j] } else { 0.0 });
    Factors::new(u, v)
}
