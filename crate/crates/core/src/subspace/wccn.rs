use std::collections::BTreeMap;

use super::SubspaceError;
use crate::tensor::{cholesky, regularize, spd_inverse, Matrix};

/// Whitening by `Bᵀ x`, where `B Bᵀ` is the inverse of the regularized
/// pooled within-class covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct WccnTransform {
    b: Matrix,
}

impl WccnTransform {
    pub fn from_factor(b: Matrix) -> Result<Self, SubspaceError> {
        if !b.is_square() {
            return Err(SubspaceError::Dimension(format!(
                "WCCN factor must be square, got {}x{}",
                b.rows(),
                b.cols()
            )));
        }
        Ok(Self { b })
    }

    pub fn factor(&self) -> &Matrix {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.rows()
    }
}

/// `(1/C) Σ_c (1/n_c) Σ_{x∈c} (x − μ_c)(x − μ_c)ᵀ`; singleton classes
/// contribute zero scatter but still count in `C`.
pub fn pooled_within_class_covariance<L: Ord>(vectors: &[Vec<f64>], labels: &[L]) -> Result<Matrix, SubspaceError> {
    if vectors.len() != labels.len() {
        return Err(SubspaceError::Dimension(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    let Some(dim) = vectors.first().map(Vec::len) else {
        return Err(SubspaceError::Dimension("no vectors".into()));
    };
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(SubspaceError::Dimension("vectors differ in length".into()));
    }
    let mut classes: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    let mut w = Matrix::zeros(dim, dim);
    let mut centred = vec![0.0; dim];
    for members in classes.values() {
        let n = members.len() as f64;
        let mut mean = vec![0.0; dim];
        for &i in members {
            mean.iter_mut().zip(&vectors[i]).for_each(|(m, v)| *m += v / n);
        }
        for &i in members {
            centred
                .iter_mut()
                .zip(vectors[i].iter().zip(&mean))
                .for_each(|(c, (v, m))| *c = v - m);
            w.add_outer(&centred, 1.0 / n);
        }
    }
    let w = w.scale(1.0 / classes.len() as f64);
    Ok(w)
}

pub fn wccn_fit<L: Ord>(vectors: &[Vec<f64>], labels: &[L], shrinkage: f64) -> Result<WccnTransform, SubspaceError> {
    let mut w = pooled_within_class_covariance(vectors, labels)?;
    w.symmetrize();
    let dim = w.rows();
    let w_reg = if w.trace() > 0.0 {
        regularize(&w, shrinkage)
    } else if shrinkage > 0.0 {
        // Zero scatter: fall back to W + ε·I.
        let mut r = w;
        for i in 0..dim {
            r[(i, i)] += shrinkage;
        }
        r
    } else {
        return Err(SubspaceError::SingularWithinClass);
    };
    let inv = spd_inverse(&w_reg)?;
    // Stored at file precision so a reloaded transform is identical.
    Ok(WccnTransform {
        b: cholesky(&inv)?.to_f32_precision(),
    })
}

/// `Bᵀ x`.
pub fn wccn_apply(x: &[f64], t: &WccnTransform) -> Result<Vec<f64>, SubspaceError> {
    if x.len() != t.dim() {
        return Err(SubspaceError::Dimension(format!(
            "vector of length {} for a {}-dimensional WCCN transform",
            x.len(),
            t.dim()
        )));
    }
    Ok(t.b.transpose_matvec(x)?)
}
