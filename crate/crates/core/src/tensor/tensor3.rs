use super::{LinalgError, Matrix};

/// Dense third-order tensor, row-major: entry `(i, j, k)` lives at
/// `((i * I2) + j) * I3 + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

fn check_mode(mode: usize) -> Result<usize, LinalgError> {
    match mode {
        1..=3 => Ok(mode - 1),
        _ => Err(LinalgError::InvalidMode(mode)),
    }
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self, LinalgError> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(LinalgError::Shape(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { dims, data })
    }

    /// Stacks equally shaped `I1 × I2` matrices along mode 3.
    pub fn from_slices(slices: &[&Matrix]) -> Result<Self, LinalgError> {
        let Some(first) = slices.first() else {
            return Err(LinalgError::Shape("no slices to stack".into()));
        };
        let (i1, i2) = first.shape();
        if slices.iter().any(|m| m.shape() != (i1, i2)) {
            return Err(LinalgError::Shape("slices differ in shape".into()));
        }
        let i3 = slices.len();
        let mut t = Self::zeros([i1, i2, i3]);
        for (k, m) in slices.iter().enumerate() {
            for i in 0..i1 {
                for j in 0..i2 {
                    t.data[(i * i2 + j) * i3 + k] = m[(i, j)];
                }
            }
        }
        Ok(t)
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    /// The `I1 × I2` frontal slice at mode-3 index `k`.
    pub fn slice3(&self, k: usize) -> Matrix {
        let [i1, i2, _] = self.dims;
        let mut m = Matrix::zeros(i1, i2);
        for i in 0..i1 {
            for j in 0..i2 {
                m[(i, j)] = self.get(i, j, k);
            }
        }
        m
    }

    /// Mode-n unfolding. Rows index mode `n`; columns run over the two
    /// remaining modes in ascending order with the later mode varying
    /// fastest.
    pub fn unfold(&self, mode: usize) -> Result<Matrix, LinalgError> {
        let n = check_mode(mode)?;
        let [i1, i2, i3] = self.dims;
        let mut out = Matrix::zeros(self.dims[n], self.data.len() / self.dims[n].max(1));
        for i in 0..i1 {
            for j in 0..i2 {
                for k in 0..i3 {
                    let v = self.get(i, j, k);
                    let (r, c) = match n {
                        0 => (i, j * i3 + k),
                        1 => (j, i * i3 + k),
                        _ => (k, i * i2 + j),
                    };
                    out[(r, c)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &Matrix, mode: usize, dims: [usize; 3]) -> Result<Self, LinalgError> {
        let n = check_mode(mode)?;
        let total: usize = dims.iter().product();
        let expected_cols = total.checked_div(dims[n]).unwrap_or(0);
        if m.rows() != dims[n] || m.cols() != expected_cols {
            return Err(LinalgError::Shape(format!(
                "{}x{} matrix cannot fold along mode {mode} into {}x{}x{}",
                m.rows(),
                m.cols(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        let [i1, i2, i3] = dims;
        let mut t = Self::zeros(dims);
        for i in 0..i1 {
            for j in 0..i2 {
                for k in 0..i3 {
                    let (r, c) = match n {
                        0 => (i, j * i3 + k),
                        1 => (j, i * i3 + k),
                        _ => (k, i * i2 + j),
                    };
                    t.set(i, j, k, m[(r, c)]);
                }
            }
        }
        Ok(t)
    }

    /// `self ×ₙ u`: replaces dimension `n` by `u.rows()`.
    pub fn mode_n_product(&self, u: &Matrix, mode: usize) -> Result<Self, LinalgError> {
        let n = check_mode(mode)?;
        if u.cols() != self.dims[n] {
            return Err(LinalgError::Shape(format!(
                "mode-{mode} product needs {} columns, matrix has {}",
                self.dims[n],
                u.cols()
            )));
        }
        let mut dims = self.dims;
        dims[n] = u.rows();
        let [i1, i2, i3] = self.dims;
        let mut out = Self::zeros(dims);
        match n {
            0 => {
                let plane = i2 * i3;
                for r in 0..u.rows() {
                    let dst = &mut out.data[r * plane..(r + 1) * plane];
                    for i in 0..i1 {
                        let w = u[(r, i)];
                        if w == 0.0 {
                            continue;
                        }
                        let src = &self.data[i * plane..(i + 1) * plane];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            }
            1 => {
                let rows = u.rows();
                for i in 0..i1 {
                    for r in 0..rows {
                        let dst_off = (i * rows + r) * i3;
                        for j in 0..i2 {
                            let w = u[(r, j)];
                            if w == 0.0 {
                                continue;
                            }
                            let src_off = (i * i2 + j) * i3;
                            for k in 0..i3 {
                                out.data[dst_off + k] += w * self.data[src_off + k];
                            }
                        }
                    }
                }
            }
            _ => {
                let rows = u.rows();
                for i in 0..i1 {
                    for j in 0..i2 {
                        let src = &self.data[(i * i2 + j) * i3..(i * i2 + j + 1) * i3];
                        let dst_off = (i * i2 + j) * rows;
                        for r in 0..rows {
                            out.data[dst_off + r] = super::matrix::dot(u.row(r), src);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
