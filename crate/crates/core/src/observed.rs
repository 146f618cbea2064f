//! Partially observed matrices and the masking operator `P_Z` with its adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::schatten::Factors;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// A matrix known only on an index set `Z`.
///
/// Observations are kept sorted by `(row, col)`; `row_ptr[i]..row_ptr[i + 1]`
/// is the slice of row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    rows: usize,
    cols: usize,
    obs: Vec<Observation>,
    row_ptr: Vec<usize>,
}

impl ObservedMatrix {
    /// Validates indices, finiteness and uniqueness. Duplicates are an error.
    pub fn new(rows: usize, cols: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut obs = Vec::with_capacity(triplets.len());
        for (row, col, value) in triplets {
            if row >= rows || col >= cols {
                return Err(Error::IndexOutOfRange { row, col, rows, cols });
            }
            if !value.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            obs.push(Observation { row, col, value });
        }
        obs.sort_by_key(|o| (o.row, o.col));
        if let Some(w) = obs
            .windows(2)
            .find(|w| (w[0].row, w[0].col) == (w[1].row, w[1].col))
        {
            return Err(Error::DuplicateObservation {
                row: w[0].row,
                col: w[0].col,
            });
        }
        Ok(Self::from_sorted(rows, cols, obs))
    }

    fn from_sorted(rows: usize, cols: usize, obs: Vec<Observation>) -> Self {
        let mut row_ptr = vec![0usize; rows + 1];
        for o in &obs {
            row_ptr[o.row + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            rows,
            cols,
            obs,
            row_ptr,
        }
    }

    /// Every entry of `x` observed.
    pub fn fully_observed(x: &DenseMatrix) -> Self {
        let (m, n) = x.shape();
        let obs = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(row, col)| Observation {
                row,
                col,
                value: x.get(row, col),
            })
            .collect();
        Self::from_sorted(m, n, obs)
    }

    /// `P_Z(x)` for this object's index set.
    pub fn mask(&self, x: &DenseMatrix) -> Result<Self> {
        self.check_shape(x.rows(), x.cols())?;
        Ok(self.with_values(self.obs.iter().map(|o| x.get(o.row, o.col)).collect()))
    }

    /// Same index set, new values (given in storage order).
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.obs.len());
        let obs = self
            .obs
            .iter()
            .zip(values)
            .map(|(o, value)| Observation { value, ..*o })
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            obs,
            row_ptr: self.row_ptr.clone(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn row_slice(&self, i: usize) -> &[Observation] {
        &self.obs[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.obs.iter().map(|o| o.value)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.rows
            && self
                .row_slice(row)
                .binary_search_by_key(&col, |o| o.col)
                .is_ok()
    }

    pub(crate) fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if (rows, cols) != (self.rows, self.cols) {
            return Err(Error::ShapeMismatch(format!(
                "observations are {}x{}, operand is {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub(crate) fn check_factors(&self, f: &Factors) -> Result<()> {
        self.check_shape(f.u().rows(), f.v().rows())
    }

    /// Residual values `Y_ij − u^i·v^j` in storage order.
    pub(crate) fn residual_values(&self, f: &Factors) -> Vec<f64> {
        let (u, v) = (f.u(), f.v());
        self.obs
            .iter()
            .map(|o| o.value - dot(u.row(o.row), v.row(o.col)))
            .collect()
    }
}

/// `P_Z(Y − UVᵀ)` as a triplet set on the same index set as `y`.
pub fn masked_residual(y: &ObservedMatrix, f: &Factors) -> Result<ObservedMatrix> {
    y.check_factors(f)?;
    Ok(y.with_values(y.residual_values(f)))
}

/// Dense embedding of the triplets: values on `Z`, zero elsewhere.
pub fn adjoint_embed(r: &ObservedMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(r.rows, r.cols);
    for o in &r.obs {
        out.set(o.row, o.col, o.value);
    }
    out
}

/// `½‖P_Z(Y − UVᵀ)‖_F²`
pub fn loss_value(y: &ObservedMatrix, f: &Factors) -> Result<f64> {
    y.check_factors(f)?;
    Ok(0.5 * y.residual_values(f).iter().map(|r| r * r).sum::<f64>())
}
