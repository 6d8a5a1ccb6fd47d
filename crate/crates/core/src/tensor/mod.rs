//! Dense matrices, third-order tensors and the symmetric eigensolvers the
//! subspace learner is built on.

mod eigen;
mod matrix;
mod tensor3;

pub use eigen::{
    cholesky, invert_lower, regularize, spd_inverse, sym_generalized_eig, symmetric_eig, Eigen, JACOBI_MAX_SWEEPS,
    JACOBI_TOLERANCE, SYMMETRY_TOLERANCE,
};
pub(crate) use matrix::dot;
pub use matrix::Matrix;
pub use tensor3::Tensor3;

#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid tensor mode {0}, expected 1, 2 or 3")]
    InvalidMode(usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot}); increase the regularization")]
    NotPositiveDefinite { pivot: usize },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}
