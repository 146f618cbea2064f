//! Variational Schatten-p quasi-norm tools and an SVD-free factorized matrix
//! completion solver.
//!
//! The regularizer `λ·‖X‖_Sp^p` for `0 < p ≤ 1` is replaced by the
//! column-decoupled form `λ·Σᵢ ((‖uᵢ‖² + ‖vᵢ‖²)/2)^p` over `X = U·Vᵀ`, which
//! the [`solver`] minimizes by block majorization with column pruning.
//! [`escape`] grows the factorization by one column when a stationary point
//! admits a descending rank-one update, and [`diagnostics`] checks the
//! optimality conditions numerically.

pub mod diagnostics;
pub mod error;
pub mod escape;
pub mod experiments;
pub mod matrix;
pub mod observed;
pub mod schatten;
pub mod solver;
pub mod spectral;
pub mod trials;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use observed::{adjoint_embed, loss_value, masked_residual, Observation, ObservedMatrix};
pub use schatten::{
    balanced_factorization, schatten_p_power, variational_product, variational_sum, Factors,
    PExponent,
};
pub use solver::{solve, Init, SolveReport, SolverConfig};
pub use spectral::{full_svd, top_singular_pair, SpectralTriple, Svd};
