//! Tensor cross-view discriminant subspace learning with within-class
//! covariance normalization.
//!
//! Training alternates over the descriptor mode (1) and the histogram mode
//! (2). For each mode, every sample is first projected along the other mode
//! with its current matrix, then the cross-view differences `x_i − z_j` of
//! kin pairs (intra) and of a seeded sample of non-kin pairs (extra) are
//! unfolded along the active mode and accumulated into two scatter
//! matrices. The new projection rows are the leading eigenvectors of the
//! generalized problem `S_E v = λ (S_I + ridge) v`.

mod archive;
mod txqda;
mod wccn;

pub use archive::{
    decode_archive, decode_model, encode_archive, encode_model, read_model_archive, write_model_archive, ARCHIVE_MAGIC,
};
pub use txqda::{
    mode_scatters, sample_extra_pairs, txqda_project, txqda_project_tensor, txqda_train, KinPair, PairedTensors,
    SolverPath, SweepDiagnostic, TxqdaConfig, TxqdaModel,
};
pub use wccn::{pooled_within_class_covariance, wccn_apply, wccn_fit, WccnTransform};

use crate::tensor::LinalgError;

#[derive(Debug, thiserror::Error)]
pub enum SubspaceError {
    #[error("training data has no kin pairs")]
    NoKinPairs,
    #[error("training data has no non-kin pairs")]
    NoNonKinPairs,
    #[error("views disagree on feature shape: {0:?} vs {1:?}")]
    ViewMismatch([usize; 2], [usize; 2]),
    #[error("pair ({parent}, {child}) is out of range for views with {n1} and {n2} samples")]
    PairIndex {
        parent: usize,
        child: usize,
        n1: usize,
        n2: usize,
    },
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("eigenproblem for mode {mode} failed in sweep {sweep}: {source}")]
    Eigen {
        mode: usize,
        sweep: usize,
        #[source]
        source: LinalgError,
    },
    #[error("within-class covariance is singular (all classes are singletons and shrinkage is 0)")]
    SingularWithinClass,
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
    #[error("malformed model archive: {0}")]
    Archive(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
