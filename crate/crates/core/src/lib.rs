//! Kinship verification from face images.
//!
//! The pipeline enhances pre-cropped faces with Multiscale Retinex, describes
//! them with multi-scale BSIF histograms and externally supplied deep
//! features, projects both through a tensor cross-view discriminant subspace
//! (with optional within-class covariance normalization), matches pairs by
//! cosine similarity and fuses matcher scores with logistic regression.

pub mod bsif;
pub mod deepfeat;
pub mod imaging;
pub mod pipeline;
pub mod scoring;
pub mod subspace;
pub mod synth;
pub mod tensor;
