//! Cholesky factorization, trace-scaled ridge regularization and the
//! symmetric (generalized) eigensolver used by subspace learning.

use super::{LinalgError, Matrix};

/// Off-diagonal Frobenius threshold for Jacobi convergence, relative to the
/// Frobenius norm of the input.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Symmetry tolerance for eigensolver inputs, relative to the largest entry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Eigenpairs sorted by descending eigenvalue; eigenvector `i` is column `i`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl Eigen {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }
}

/// Lower-triangular `L` with `L Lᵀ = m`.
pub fn cholesky(m: &Matrix) -> Result<Matrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::Shape(format!(
            "cholesky of non-square {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_symmetric(SYMMETRY_TOLERANCE) {
        return Err(LinalgError::NotSymmetric);
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !d.is_finite() || d <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// `m + lambda · trace(m)/n · I`.
///
/// Panics if `m` is not square.
pub fn regularize(m: &Matrix, lambda: f64) -> Matrix {
    assert!(m.is_square(), "regularize needs a square matrix");
    let n = m.rows();
    let mut out = m.clone();
    if n == 0 {
        return out;
    }
    let ridge = lambda * m.trace() / n as f64;
    for i in 0..n {
        out[(i, i)] += ridge;
    }
    out
}

/// Solves `L x = b` in place for lower-triangular `L`.
fn forward_substitute(l: &Matrix, b: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        let row = l.row(i);
        let mut s = b[i];
        for k in 0..i {
            s -= row[k] * b[k];
        }
        b[i] = s / row[i];
    }
}

/// Solves `Lᵀ x = b` in place for lower-triangular `L`.
fn backward_substitute_transposed(l: &Matrix, b: &mut [f64]) {
    let n = l.rows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// `L⁻¹` for lower-triangular `L`.
pub fn invert_lower(l: &Matrix) -> Matrix {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        forward_substitute(l, &mut col);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    inv
}

/// Inverse of a symmetric positive definite matrix through its Cholesky
/// factor.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix, LinalgError> {
    let l = cholesky(m)?;
    let linv = invert_lower(&l);
    // (L Lᵀ)⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = linv.transpose().matmul(&linv)?;
    inv.symmetrize();
    Ok(inv)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn symmetric_eig(a: &Matrix) -> Result<Eigen, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::Shape(format!(
            "eigendecomposition of non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if !a.is_symmetric(SYMMETRY_TOLERANCE) {
        return Err(LinalgError::NotSymmetric);
    }
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let threshold = JACOBI_TOLERANCE * m.frobenius();
    let a = m.data_mut();
    // Rows of Vᵀ, so that every update walks contiguous memory.
    let mut vt = Matrix::identity(n);
    let vt_data = vt.data_mut();

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    // Rotates rows p < q of an n-column row-major buffer.
    let rotate = |buf: &mut [f64], p: usize, q: usize, c: f64, s: f64| {
        let (head, tail) = buf.split_at_mut(q * n);
        let rp = &mut head[p * n..(p + 1) * n];
        let rq = &mut tail[..n];
        for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
            let (xp, xq) = (*x, *y);
            *x = c * xp - s * xq;
            *y = s * xp + c * xq;
        }
    };

    let mut converged = off_norm(a) <= threshold;
    let mut sweep = 0;
    while !converged && sweep < JACOBI_MAX_SWEEPS {
        sweep += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Jᵀ A J: rotate rows p and q, mirror them into the columns,
                // then set the 2×2 block directly.
                rotate(a, p, q, c, s);
                for k in 0..n {
                    a[k * n + p] = a[p * n + k];
                    a[k * n + q] = a[q * n + k];
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                rotate(vt_data, p, q, c, s);
            }
        }
        converged = off_norm(a) <= threshold;
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: sweep });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = vt.row(src).to_vec();
        orient(&mut col);
        for (r, x) in col.into_iter().enumerate() {
            vectors[(r, dst)] = x;
        }
    }
    Ok(Eigen { values, vectors })
}

/// Flips the sign so the largest-magnitude component is positive.
fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Solves `A v = λ B v` for symmetric `A` and symmetric positive definite
/// `B` by Cholesky reduction to a standard symmetric problem.
///
/// Eigenvalues come back in descending order and the eigenvectors
/// (columns) are `B`-orthonormal.
pub fn sym_generalized_eig(a: &Matrix, b: &Matrix) -> Result<Eigen, LinalgError> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(LinalgError::Shape(format!(
            "generalized eigenproblem needs equal square matrices, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if !a.is_symmetric(SYMMETRY_TOLERANCE) {
        return Err(LinalgError::NotSymmetric);
    }
    let l = cholesky(b)?;
    let n = a.rows();

    // C = L⁻¹ A L⁻ᵀ, built column by column: X = L⁻¹ A, then C = L⁻¹ Xᵀ.
    let mut x = Matrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            col[i] = a[(i, j)];
        }
        forward_substitute(&l, &mut col);
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    let mut c = Matrix::zeros(n, n);
    for j in 0..n {
        col.copy_from_slice(x.row(j));
        forward_substitute(&l, &mut col);
        for i in 0..n {
            c[(i, j)] = col[i];
        }
    }
    c.symmetrize();

    let std = symmetric_eig(&c)?;
    let mut vectors = Matrix::zeros(n, n);
    for j in 0..n {
        let mut w = std.vectors.column(j);
        backward_substitute_transposed(&l, &mut w);
        orient(&mut w);
        for i in 0..n {
            vectors[(i, j)] = w[i];
        }
    }
    Ok(Eigen {
        values: std.values,
        vectors,
    })
}
